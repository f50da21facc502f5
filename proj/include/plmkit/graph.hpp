#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "plmkit/common.hpp"
#include "plmkit/half.hpp"

namespace plmkit::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using IndexVec = std::vector<Eigen::Index>;

// Reverse-mode tape over dense row-major matrices. A Graph owns the nodes of
// one computation; free functions below append ops. Backward lambdas capture
// stable Node pointers, so nodes live behind unique_ptr.
template <typename S>
class Graph {
 public:
  struct Node {
    Mat<S> value;
    Mat<S> grad;
    bool needs_grad = false;
    bool grad_set = false;
    std::function<void()> backprop;
  };

  bool train_mode = true;   // dropout active when true
  bool round_half = false;  // emulate binary16 activations (inference only)

  Node* add(Mat<S> value, bool needs_grad, std::function<void()> backprop = {}) {
    auto node = std::make_unique<Node>();
    node->value = std::move(value);
    if (round_half) half_roundtrip_inplace(node->value);
    node->needs_grad = needs_grad;
    node->backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
  }

  static void accumulate(Node* n, const Mat<S>& g) {
    if (!n->needs_grad) return;
    if (!n->grad_set) {
      n->grad = g;
      n->grad_set = true;
    } else {
      n->grad += g;
    }
  }

  // Gradient of `loss` (a 1x1 node) w.r.t. every reachable node.
  void backward(Node* loss) {
    if (loss->value.size() != 1)
      throw ContractError("backward: loss must be scalar");
    Mat<S> one(1, 1);
    one(0, 0) = S(1);
    accumulate(loss, one);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node* n = it->get();
      if (n->grad_set && n->backprop) n->backprop();
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
};

template <typename S>
struct NodeRef {
  Graph<S>* graph = nullptr;
  typename Graph<S>::Node* node = nullptr;

  const Mat<S>& value() const { return node->value; }
  // Zero matrix if no gradient flowed into this node.
  Mat<S> grad() const {
    if (node->grad_set) return node->grad;
    return Mat<S>::Zero(node->value.rows(), node->value.cols());
  }
  bool needs_grad() const { return node && node->needs_grad; }
  explicit operator bool() const { return node != nullptr; }
};

template <typename S, typename Derived>
NodeRef<S> leaf(Graph<S>& g, const Eigen::MatrixBase<Derived>& value,
                bool needs_grad = false) {
  return {&g, g.add(Mat<S>(value.template cast<S>()), needs_grad)};
}

template <typename S, typename Derived>
NodeRef<S> constant(Graph<S>& g, const Eigen::MatrixBase<Derived>& value) {
  return leaf(g, value, false);
}

namespace detail {

template <typename S>
void check_same_graph(NodeRef<S> a, NodeRef<S> b) {
  if (a.graph != b.graph) throw ContractError("operands from different graphs");
}

template <typename S>
void check_shape(NodeRef<S> a, NodeRef<S> b, const char* op) {
  if (a.value().rows() != b.value().rows() || a.value().cols() != b.value().cols())
    throw ContractError(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// ---- elementwise and linear ops ----

template <typename S>
NodeRef<S> matmul(NodeRef<S> a, NodeRef<S> b) {
  detail::check_same_graph(a, b);
  if (a.value().cols() != b.value().rows())
    throw ContractError("matmul: inner dimensions disagree");
  auto* an = a.node;
  auto* bn = b.node;
  Mat<S> out = an->value * bn->value;
  const bool ng = an->needs_grad || bn->needs_grad;
  auto* n = a.graph->add(std::move(out), ng);
  if (ng)
    n->backprop = [an, bn, n] {
      if (an->needs_grad) Graph<S>::accumulate(an, n->grad * bn->value.transpose());
      if (bn->needs_grad) Graph<S>::accumulate(bn, an->value.transpose() * n->grad);
    };
  return {a.graph, n};
}

// a * b^T
template <typename S>
NodeRef<S> matmul_nt(NodeRef<S> a, NodeRef<S> b) {
  detail::check_same_graph(a, b);
  if (a.value().cols() != b.value().cols())
    throw ContractError("matmul_nt: inner dimensions disagree");
  auto* an = a.node;
  auto* bn = b.node;
  Mat<S> out = an->value * bn->value.transpose();
  const bool ng = an->needs_grad || bn->needs_grad;
  auto* n = a.graph->add(std::move(out), ng);
  if (ng)
    n->backprop = [an, bn, n] {
      if (an->needs_grad) Graph<S>::accumulate(an, n->grad * bn->value);
      if (bn->needs_grad) Graph<S>::accumulate(bn, n->grad.transpose() * an->value);
    };
  return {a.graph, n};
}

template <typename S>
NodeRef<S> add(NodeRef<S> a, NodeRef<S> b) {
  detail::check_same_graph(a, b);
  detail::check_shape(a, b, "add");
  auto* an = a.node;
  auto* bn = b.node;
  const bool ng = an->needs_grad || bn->needs_grad;
  auto* n = a.graph->add(an->value + bn->value, ng);
  if (ng)
    n->backprop = [an, bn, n] {
      Graph<S>::accumulate(an, n->grad);
      Graph<S>::accumulate(bn, n->grad);
    };
  return {a.graph, n};
}

template <typename S>
NodeRef<S> mul(NodeRef<S> a, NodeRef<S> b) {
  detail::check_same_graph(a, b);
  detail::check_shape(a, b, "mul");
  auto* an = a.node;
  auto* bn = b.node;
  const bool ng = an->needs_grad || bn->needs_grad;
  auto* n = a.graph->add(an->value.cwiseProduct(bn->value), ng);
  if (ng)
    n->backprop = [an, bn, n] {
      if (an->needs_grad) Graph<S>::accumulate(an, n->grad.cwiseProduct(bn->value));
      if (bn->needs_grad) Graph<S>::accumulate(bn, n->grad.cwiseProduct(an->value));
    };
  return {a.graph, n};
}

template <typename S>
NodeRef<S> scale(NodeRef<S> a, S c) {
  auto* an = a.node;
  auto* n = a.graph->add(Mat<S>(an->value * c), an->needs_grad);
  if (an->needs_grad)
    n->backprop = [an, n, c] { Graph<S>::accumulate(an, Mat<S>(n->grad * c)); };
  return {a.graph, n};
}

// a + row-broadcast bias (bias is 1 x n)
template <typename S>
NodeRef<S> add_row_bias(NodeRef<S> a, NodeRef<S> bias) {
  detail::check_same_graph(a, bias);
  if (bias.value().rows() != 1 || bias.value().cols() != a.value().cols())
    throw ContractError("add_row_bias: bias must be 1 x cols(a)");
  auto* an = a.node;
  auto* bn = bias.node;
  Mat<S> out = an->value.rowwise() + bn->value.row(0);
  const bool ng = an->needs_grad || bn->needs_grad;
  auto* n = a.graph->add(std::move(out), ng);
  if (ng)
    n->backprop = [an, bn, n] {
      Graph<S>::accumulate(an, n->grad);
      if (bn->needs_grad)
        Graph<S>::accumulate(bn, Mat<S>(n->grad.colwise().sum()));
    };
  return {a.graph, n};
}

template <typename S>
NodeRef<S> relu(NodeRef<S> a) {
  auto* an = a.node;
  auto* n = a.graph->add(Mat<S>(an->value.cwiseMax(S(0))), an->needs_grad);
  if (an->needs_grad)
    n->backprop = [an, n] {
      Mat<S> g = n->grad;
      for (Eigen::Index i = 0; i < g.size(); ++i)
        if (an->value.data()[i] <= S(0)) g.data()[i] = S(0);
      Graph<S>::accumulate(an, g);
    };
  return {a.graph, n};
}

template <typename S>
NodeRef<S> gelu(NodeRef<S> a) {
  auto* an = a.node;
  Mat<S> out = an->value.unaryExpr([](S x) {
    return S(0.5) * x * (S(1) + S(std::erf(double(x) / std::sqrt(2.0))));
  });
  auto* n = a.graph->add(std::move(out), an->needs_grad);
  if (an->needs_grad)
    n->backprop = [an, n] {
      Mat<S> d = an->value.unaryExpr([](S x) {
        const double xd = double(x);
        const double cdf = 0.5 * (1.0 + std::erf(xd / std::sqrt(2.0)));
        const double pdf = std::exp(-0.5 * xd * xd) / std::sqrt(2.0 * M_PI);
        return S(cdf + xd * pdf);
      });
      Graph<S>::accumulate(an, Mat<S>(n->grad.cwiseProduct(d)));
    };
  return {a.graph, n};
}

template <typename S>
NodeRef<S> tanh_op(NodeRef<S> a) {
  auto* an = a.node;
  auto* n = a.graph->add(Mat<S>(an->value.array().tanh().matrix()), an->needs_grad);
  if (an->needs_grad)
    n->backprop = [an, n] {
      Mat<S> d = (S(1) - n->value.array().square()).matrix();
      Graph<S>::accumulate(an, Mat<S>(n->grad.cwiseProduct(d)));
    };
  return {a.graph, n};
}

template <typename S>
NodeRef<S> sigmoid(NodeRef<S> a) {
  auto* an = a.node;
  Mat<S> out = an->value.unaryExpr([](S x) {
    return x >= S(0) ? S(1) / (S(1) + S(std::exp(double(-x))))
                     : S(std::exp(double(x))) / (S(1) + S(std::exp(double(x))));
  });
  auto* n = a.graph->add(std::move(out), an->needs_grad);
  if (an->needs_grad)
    n->backprop = [an, n] {
      Mat<S> d = n->value.cwiseProduct(Mat<S>(Mat<S>::Ones(n->value.rows(), n->value.cols()) - n->value));
      Graph<S>::accumulate(an, Mat<S>(n->grad.cwiseProduct(d)));
    };
  return {a.graph, n};
}

// Row-wise softmax, stabilized by max subtraction.
template <typename S>
NodeRef<S> softmax_rows(NodeRef<S> a) {
  auto* an = a.node;
  Mat<S> out = an->value;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const S mx = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  auto* n = a.graph->add(std::move(out), an->needs_grad);
  if (an->needs_grad)
    n->backprop = [an, n] {
      Mat<S> g(n->grad.rows(), n->grad.cols());
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const S dot = n->grad.row(r).dot(n->value.row(r));
        g.row(r) = n->value.row(r).cwiseProduct(
            (n->grad.row(r).array() - dot).matrix());
      }
      Graph<S>::accumulate(an, g);
    };
  return {a.graph, n};
}

// Row-wise layer normalization with learned scale and shift (both 1 x n).
template <typename S>
NodeRef<S> layer_norm(NodeRef<S> a, NodeRef<S> gamma, NodeRef<S> beta,
                      S eps = S(1e-5)) {
  detail::check_same_graph(a, gamma);
  detail::check_same_graph(a, beta);
  if (gamma.value().rows() != 1 || gamma.value().cols() != a.value().cols() ||
      beta.value().rows() != 1 || beta.value().cols() != a.value().cols())
    throw ContractError("layer_norm: scale/shift must be 1 x cols(a)");
  auto* an = a.node;
  auto* gn = gamma.node;
  auto* bn = beta.node;
  const Eigen::Index cols = an->value.cols();

  auto xhat = std::make_shared<Mat<S>>(an->value.rows(), cols);
  auto inv_std = std::make_shared<Mat<S>>(an->value.rows(), 1);
  Mat<S> out(an->value.rows(), cols);
  for (Eigen::Index r = 0; r < an->value.rows(); ++r) {
    const S mean = an->value.row(r).mean();
    const S var = (an->value.row(r).array() - mean).square().mean();
    const S istd = S(1) / S(std::sqrt(double(var + eps)));
    (*inv_std)(r, 0) = istd;
    xhat->row(r) = (an->value.row(r).array() - mean).matrix() * istd;
    out.row(r) =
        xhat->row(r).cwiseProduct(gn->value.row(0)) + bn->value.row(0);
  }
  const bool ng = an->needs_grad || gn->needs_grad || bn->needs_grad;
  auto* n = a.graph->add(std::move(out), ng);
  if (ng)
    n->backprop = [an, gn, bn, n, xhat, inv_std, cols] {
      if (gn->needs_grad)
        Graph<S>::accumulate(gn, Mat<S>(n->grad.cwiseProduct(*xhat).colwise().sum()));
      if (bn->needs_grad)
        Graph<S>::accumulate(bn, Mat<S>(n->grad.colwise().sum()));
      if (an->needs_grad) {
        Mat<S> dx(n->grad.rows(), cols);
        for (Eigen::Index r = 0; r < n->grad.rows(); ++r) {
          Mat<S> g = n->grad.row(r).cwiseProduct(gn->value.row(0));
          const S mg = g.mean();
          const S mgx = g.cwiseProduct(xhat->row(r)).mean();
          dx.row(r) = ((g.array() - mg) - xhat->row(r).array() * mgx).matrix() *
                      (*inv_std)(r, 0);
        }
        Graph<S>::accumulate(an, dx);
      }
    };
  return {a.graph, n};
}

// ---- gather / structural ops ----

// Rows of `table` selected by token id; gradient scatters back into the table.
template <typename S>
NodeRef<S> embedding(NodeRef<S> table, const std::vector<int>& ids) {
  auto* tn = table.node;
  Mat<S> out(Eigen::Index(ids.size()), tn->value.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tn->value.rows())
      throw ContractError("embedding: id out of range");
    out.row(Eigen::Index(i)) = tn->value.row(ids[i]);
  }
  auto* n = table.graph->add(std::move(out), tn->needs_grad);
  if (tn->needs_grad)
    n->backprop = [tn, n, ids] {
      Mat<S> g = Mat<S>::Zero(tn->value.rows(), tn->value.cols());
      for (std::size_t i = 0; i < ids.size(); ++i)
        g.row(ids[i]) += n->grad.row(Eigen::Index(i));
      Graph<S>::accumulate(tn, g);
    };
  return {table.graph, n};
}

template <typename S>
NodeRef<S> gather_rows(NodeRef<S> a, const IndexVec& rows) {
  auto* an = a.node;
  Mat<S> out(Eigen::Index(rows.size()), an->value.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= an->value.rows())
      throw ContractError("gather_rows: index out of range");
    out.row(Eigen::Index(i)) = an->value.row(rows[i]);
  }
  auto* n = a.graph->add(std::move(out), an->needs_grad);
  if (an->needs_grad)
    n->backprop = [an, n, rows] {
      Mat<S> g = Mat<S>::Zero(an->value.rows(), an->value.cols());
      for (std::size_t i = 0; i < rows.size(); ++i)
        g.row(rows[i]) += n->grad.row(Eigen::Index(i));
      Graph<S>::accumulate(an, g);
    };
  return {a.graph, n};
}

template <typename S>
NodeRef<S> row_block(NodeRef<S> a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 1 || start + count > a.value().rows())
    throw ContractError("row_block: range out of bounds");
  auto* an = a.node;
  auto* n = a.graph->add(Mat<S>(an->value.middleRows(start, count)), an->needs_grad);
  if (an->needs_grad)
    n->backprop = [an, n, start, count] {
      Mat<S> g = Mat<S>::Zero(an->value.rows(), an->value.cols());
      g.middleRows(start, count) = n->grad;
      Graph<S>::accumulate(an, g);
    };
  return {a.graph, n};
}

template <typename S>
NodeRef<S> col_block(NodeRef<S> a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 1 || start + count > a.value().cols())
    throw ContractError("col_block: range out of bounds");
  auto* an = a.node;
  auto* n = a.graph->add(Mat<S>(an->value.middleCols(start, count)), an->needs_grad);
  if (an->needs_grad)
    n->backprop = [an, n, start, count] {
      Mat<S> g = Mat<S>::Zero(an->value.rows(), an->value.cols());
      g.middleCols(start, count) = n->grad;
      Graph<S>::accumulate(an, g);
    };
  return {a.graph, n};
}

template <typename S>
NodeRef<S> concat_cols(NodeRef<S> a, NodeRef<S> b) {
  detail::check_same_graph(a, b);
  if (a.value().rows() != b.value().rows())
    throw ContractError("concat_cols: row counts differ");
  auto* an = a.node;
  auto* bn = b.node;
  Mat<S> out(an->value.rows(), an->value.cols() + bn->value.cols());
  out << an->value, bn->value;
  const bool ng = an->needs_grad || bn->needs_grad;
  auto* n = a.graph->add(std::move(out), ng);
  if (ng)
    n->backprop = [an, bn, n] {
      if (an->needs_grad)
        Graph<S>::accumulate(an, Mat<S>(n->grad.leftCols(an->value.cols())));
      if (bn->needs_grad)
        Graph<S>::accumulate(bn, Mat<S>(n->grad.rightCols(bn->value.cols())));
    };
  return {a.graph, n};
}

// Inverted dropout by a caller-supplied mask of 0 / (1/(1-p)) entries. The
// caller owns the mask so that training runs can derive it from per-example
// streams (making results independent of batch partitioning).
template <typename S>
NodeRef<S> dropout(NodeRef<S> a, const Mat<S>& mask) {
  if (mask.rows() != a.value().rows() || mask.cols() != a.value().cols())
    throw ContractError("dropout: mask shape mismatch");
  auto* an = a.node;
  auto mk = std::make_shared<Mat<S>>(mask);
  auto* n = a.graph->add(Mat<S>(an->value.cwiseProduct(*mk)), an->needs_grad);
  if (an->needs_grad)
    n->backprop = [an, n, mk] {
      Graph<S>::accumulate(an, Mat<S>(n->grad.cwiseProduct(*mk)));
    };
  return {a.graph, n};
}

template <typename S>
Mat<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout rate must be in [0,1)");
  Mat<S> m(rows, cols);
  const S keep = S(1.0 / (1.0 - rate));
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = rng.uniform() < rate ? S(0) : keep;
  return m;
}

// ---- reductions and losses ----

template <typename S>
NodeRef<S> sum_all(NodeRef<S> a) {
  auto* an = a.node;
  Mat<S> out(1, 1);
  out(0, 0) = an->value.sum();
  auto* n = a.graph->add(std::move(out), an->needs_grad);
  if (an->needs_grad)
    n->backprop = [an, n] {
      Graph<S>::accumulate(
          an, Mat<S>(Mat<S>::Constant(an->value.rows(), an->value.cols(),
                                      n->grad(0, 0))));
    };
  return {a.graph, n};
}

template <typename S>
NodeRef<S> mean_all(NodeRef<S> a) {
  auto* an = a.node;
  Mat<S> out(1, 1);
  out(0, 0) = an->value.mean();
  auto* n = a.graph->add(std::move(out), an->needs_grad);
  if (an->needs_grad)
    n->backprop = [an, n] {
      const S g = n->grad(0, 0) / S(an->value.size());
      Graph<S>::accumulate(
          an, Mat<S>(Mat<S>::Constant(an->value.rows(), an->value.cols(), g)));
    };
  return {a.graph, n};
}

// Mean cross-entropy of row-wise softmax(logits) against integer targets.
template <typename S>
NodeRef<S> cross_entropy(NodeRef<S> logits, const std::vector<int>& targets) {
  auto* ln = logits.node;
  if (Eigen::Index(targets.size()) != ln->value.rows())
    throw ContractError("cross_entropy: one target per logits row required");
  if (targets.empty()) throw ContractError("cross_entropy: empty targets");
  const Eigen::Index classes = ln->value.cols();

  auto probs = std::make_shared<Mat<S>>(ln->value.rows(), classes);
  S loss = S(0);
  for (Eigen::Index r = 0; r < ln->value.rows(); ++r) {
    if (targets[std::size_t(r)] < 0 || targets[std::size_t(r)] >= classes)
      throw ContractError("cross_entropy: target class out of range");
    const S mx = ln->value.row(r).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (ln->value.row(r).array() - mx).exp();
    const S z = e.sum();
    probs->row(r) = (e / z).matrix();
    loss -= S(std::log(double((*probs)(r, targets[std::size_t(r)]))));
  }
  Mat<S> out(1, 1);
  out(0, 0) = loss / S(ln->value.rows());
  auto* n = logits.graph->add(std::move(out), ln->needs_grad);
  if (ln->needs_grad)
    n->backprop = [ln, n, probs, targets] {
      Mat<S> g = *probs;
      for (Eigen::Index r = 0; r < g.rows(); ++r)
        g(r, targets[std::size_t(r)]) -= S(1);
      g *= n->grad(0, 0) / S(g.rows());
      Graph<S>::accumulate(ln, g);
    };
  return {logits.graph, n};
}

// ---- sequence kernels ----

// 1-D convolution over rows with same-padding; W is (window*Cin) x Cout.
template <typename S>
NodeRef<S> conv1d_same(NodeRef<S> x, NodeRef<S> w, NodeRef<S> bias, int window) {
  detail::check_same_graph(x, w);
  detail::check_same_graph(x, bias);
  if (window < 1 || window % 2 == 0)
    throw ContractError("conv1d_same: window must be odd and positive");
  const Eigen::Index L = x.value().rows();
  const Eigen::Index cin = x.value().cols();
  const Eigen::Index cout = w.value().cols();
  if (w.value().rows() != Eigen::Index(window) * cin)
    throw ContractError("conv1d_same: weight rows must be window*Cin");
  if (bias.value().rows() != 1 || bias.value().cols() != cout)
    throw ContractError("conv1d_same: bias must be 1 x Cout");

  auto* xn = x.node;
  auto* wn = w.node;
  auto* bn = bias.node;
  const int half = window / 2;

  // im2row: row t holds the zero-padded window around position t.
  auto patches = std::make_shared<Mat<S>>(Mat<S>::Zero(L, Eigen::Index(window) * cin));
  for (Eigen::Index t = 0; t < L; ++t)
    for (int k = 0; k < window; ++k) {
      const Eigen::Index src = t + k - half;
      if (src < 0 || src >= L) continue;
      patches->block(t, Eigen::Index(k) * cin, 1, cin) = xn->value.row(src);
    }
  Mat<S> out = (*patches) * wn->value;
  out.rowwise() += bn->value.row(0);

  const bool ng = xn->needs_grad || wn->needs_grad || bn->needs_grad;
  auto* n = x.graph->add(std::move(out), ng);
  if (ng)
    n->backprop = [xn, wn, bn, n, patches, window, half, L, cin] {
      if (wn->needs_grad)
        Graph<S>::accumulate(wn, Mat<S>(patches->transpose() * n->grad));
      if (bn->needs_grad)
        Graph<S>::accumulate(bn, Mat<S>(n->grad.colwise().sum()));
      if (xn->needs_grad) {
        Mat<S> dpatches = n->grad * wn->value.transpose();
        Mat<S> dx = Mat<S>::Zero(L, cin);
        for (Eigen::Index t = 0; t < L; ++t)
          for (int k = 0; k < window; ++k) {
            const Eigen::Index src = t + k - half;
            if (src < 0 || src >= L) continue;
            dx.row(src) += dpatches.block(t, Eigen::Index(k) * cin, 1, cin);
          }
        Graph<S>::accumulate(xn, dx);
      }
    };
  return {x.graph, n};
}

// One LSTM step built from primitive ops; gates packed as [i f g o].
template <typename S>
struct LstmState {
  NodeRef<S> h;
  NodeRef<S> c;
};

template <typename S>
LstmState<S> lstm_cell(NodeRef<S> x_t, LstmState<S> prev, NodeRef<S> wx,
                       NodeRef<S> wh, NodeRef<S> bias) {
  const Eigen::Index hidden = prev.h.value().cols();
  auto z = add_row_bias(add(matmul(x_t, wx), matmul(prev.h, wh)), bias);
  auto i = sigmoid(col_block(z, 0, hidden));
  auto f = sigmoid(col_block(z, hidden, hidden));
  auto g = tanh_op(col_block(z, 2 * hidden, hidden));
  auto o = sigmoid(col_block(z, 3 * hidden, hidden));
  auto c = add(mul(f, prev.c), mul(i, g));
  auto h = mul(o, tanh_op(c));
  return {h, c};
}

// Full unidirectional LSTM over a sequence with fused BPTT backward.
// Returns the hidden states, rows in original sequence order.
template <typename S>
NodeRef<S> lstm_seq(NodeRef<S> x, NodeRef<S> wx, NodeRef<S> wh, NodeRef<S> bias,
                    bool reverse) {
  detail::check_same_graph(x, wx);
  detail::check_same_graph(x, wh);
  detail::check_same_graph(x, bias);
  const Eigen::Index L = x.value().rows();
  const Eigen::Index in = x.value().cols();
  if (wx.value().cols() % 4 != 0)
    throw ContractError("lstm_seq: gate weight cols must be 4*hidden");
  const Eigen::Index hidden = wx.value().cols() / 4;
  if (wx.value().rows() != in || wh.value().rows() != hidden ||
      wh.value().cols() != 4 * hidden || bias.value().cols() != 4 * hidden)
    throw ContractError("lstm_seq: weight shapes inconsistent");

  auto* xn = x.node;
  auto* wxn = wx.node;
  auto* whn = wh.node;
  auto* bn = bias.node;

  struct Cache {
    Mat<S> gates;  // L x 4h, post-activation [i f g o]
    Mat<S> cells;  // L x h
    Mat<S> tanhc;  // L x h
    Mat<S> hs;     // L x h, in step order
  };
  auto cache = std::make_shared<Cache>();
  cache->gates.resize(L, 4 * hidden);
  cache->cells.resize(L, hidden);
  cache->tanhc.resize(L, hidden);
  cache->hs.resize(L, hidden);

  Mat<S> h = Mat<S>::Zero(1, hidden);
  Mat<S> c = Mat<S>::Zero(1, hidden);
  Mat<S> out(L, hidden);
  for (Eigen::Index step = 0; step < L; ++step) {
    const Eigen::Index t = reverse ? L - 1 - step : step;
    Mat<S> z = xn->value.row(t) * wxn->value + h * whn->value + bn->value;
    auto sig = [](S v) {
      return v >= S(0) ? S(1) / (S(1) + S(std::exp(double(-v))))
                       : S(std::exp(double(v))) / (S(1) + S(std::exp(double(v))));
    };
    for (Eigen::Index j = 0; j < hidden; ++j) {
      z(0, j) = sig(z(0, j));                            // i
      z(0, hidden + j) = sig(z(0, hidden + j));          // f
      z(0, 2 * hidden + j) = S(std::tanh(double(z(0, 2 * hidden + j))));  // g
      z(0, 3 * hidden + j) = sig(z(0, 3 * hidden + j));  // o
    }
    Mat<S> cnew = z.middleCols(hidden, hidden).cwiseProduct(c) +
                  z.leftCols(hidden).cwiseProduct(z.middleCols(2 * hidden, hidden));
    Mat<S> tc = cnew.array().tanh().matrix();
    h = z.middleCols(3 * hidden, hidden).cwiseProduct(tc);
    c = cnew;
    cache->gates.row(step) = z;
    cache->cells.row(step) = cnew;
    cache->tanhc.row(step) = tc;
    cache->hs.row(step) = h;
    out.row(t) = h;
  }

  const bool ng = xn->needs_grad || wxn->needs_grad || whn->needs_grad || bn->needs_grad;
  auto* n = x.graph->add(std::move(out), ng);
  if (ng)
    n->backprop = [xn, wxn, whn, bn, n, cache, reverse, L, in, hidden] {
      Mat<S> dx = Mat<S>::Zero(L, in);
      Mat<S> dwx = Mat<S>::Zero(in, 4 * hidden);
      Mat<S> dwh = Mat<S>::Zero(hidden, 4 * hidden);
      Mat<S> db = Mat<S>::Zero(1, 4 * hidden);
      Mat<S> dh_next = Mat<S>::Zero(1, hidden);
      Mat<S> dc_next = Mat<S>::Zero(1, hidden);
      for (Eigen::Index step = L - 1; step >= 0; --step) {
        const Eigen::Index t = reverse ? L - 1 - step : step;
        Mat<S> dh = n->grad.row(t) + dh_next;
        const auto i = cache->gates.row(step).leftCols(hidden);
        const auto f = cache->gates.row(step).middleCols(hidden, hidden);
        const auto g = cache->gates.row(step).middleCols(2 * hidden, hidden);
        const auto o = cache->gates.row(step).middleCols(3 * hidden, hidden);
        const auto tc = cache->tanhc.row(step);
        Mat<S> dc = dh.cwiseProduct(o).cwiseProduct(
                        (S(1) - tc.array().square()).matrix()) +
                    dc_next;
        Mat<S> c_prev = step > 0 ? Mat<S>(cache->cells.row(step - 1))
                                 : Mat<S>(Mat<S>::Zero(1, hidden));
        Mat<S> h_prev = step > 0 ? Mat<S>(cache->hs.row(step - 1))
                                 : Mat<S>(Mat<S>::Zero(1, hidden));
        Mat<S> dz(1, 4 * hidden);
        dz.leftCols(hidden) = dc.cwiseProduct(g).cwiseProduct(
            i.cwiseProduct((S(1) - i.array()).matrix()));
        dz.middleCols(hidden, hidden) = dc.cwiseProduct(c_prev).cwiseProduct(
            f.cwiseProduct((S(1) - f.array()).matrix()));
        dz.middleCols(2 * hidden, hidden) = dc.cwiseProduct(i).cwiseProduct(
            (S(1) - g.array().square()).matrix());
        dz.middleCols(3 * hidden, hidden) = dh.cwiseProduct(tc).cwiseProduct(
            o.cwiseProduct((S(1) - o.array()).matrix()));

        dx.row(t) = dz * wxn->value.transpose();
        dwx.noalias() += xn->value.row(t).transpose() * dz;
        dwh.noalias() += h_prev.transpose() * dz;
        db += dz;
        dh_next = dz * whn->value.transpose();
        dc_next = dc.cwiseProduct(f);
      }
      if (xn->needs_grad) Graph<S>::accumulate(xn, dx);
      if (wxn->needs_grad) Graph<S>::accumulate(wxn, dwx);
      if (whn->needs_grad) Graph<S>::accumulate(whn, dwh);
      if (bn->needs_grad) Graph<S>::accumulate(bn, db);
    };
  return {x.graph, n};
}

// ---- fused scaled-dot-product multi-head self-attention ----

struct AttentionSpec {
  int heads = 1;
  int batch = 1;
  Eigen::Index seq_len = 0;
  // Per-sequence additive masks stacked vertically (batch*L x L); entries are
  // 0 for attendable keys and a large negative number for PAD keys.
  const void* additive_mask = nullptr;   // Mat<S>*, type-erased to keep the struct scalar-free
  const Eigen::MatrixXi* rel_buckets = nullptr;  // L x L bucket ids, optional
};

// q, k, v: (batch*L) x d with d = heads * head_dim. rel_bias (optional): a
// heads x n_buckets table added to pre-softmax scores via spec.rel_buckets.
// dropout_mask (optional): (batch*heads*L) x L inverted-dropout mask applied
// to the attention probabilities. capture (optional) receives the post-mask
// probabilities as batch*heads matrices of L x L, head-major within batch.
template <typename S>
NodeRef<S> multihead_attention(NodeRef<S> q, NodeRef<S> k, NodeRef<S> v,
                               NodeRef<S> rel_bias, const AttentionSpec& spec,
                               std::type_identity_t<const Mat<S>*> dropout_mask = nullptr,
                               std::type_identity_t<std::vector<Mat<S>>*> capture = nullptr) {
  detail::check_same_graph(q, k);
  detail::check_same_graph(q, v);
  const Eigen::Index L = spec.seq_len;
  const int B = spec.batch;
  const int H = spec.heads;
  const Eigen::Index d = q.value().cols();
  if (d % H != 0) throw ContractError("attention: width not divisible by heads");
  const Eigen::Index hd = d / H;
  if (q.value().rows() != Eigen::Index(B) * L)
    throw ContractError("attention: rows must be batch*seq_len");
  const auto* mask = static_cast<const Mat<S>*>(spec.additive_mask);
  if (mask && (mask->rows() != Eigen::Index(B) * L || mask->cols() != L))
    throw ContractError("attention: mask must be (batch*L) x L");
  if (spec.rel_buckets && !rel_bias)
    throw ContractError("attention: rel_buckets given without bias table");

  auto* qn = q.node;
  auto* kn = k.node;
  auto* vn = v.node;
  auto* biasn = rel_bias ? rel_bias.node : nullptr;
  const S inv_sqrt = S(1.0 / std::sqrt(double(hd)));

  auto probs = std::make_shared<std::vector<Mat<S>>>();
  probs->reserve(std::size_t(B) * H);

  Mat<S> out(Eigen::Index(B) * L, d);
  for (int b = 0; b < B; ++b)
    for (int h = 0; h < H; ++h) {
      const auto qb = qn->value.block(b * L, h * hd, L, hd);
      const auto kb = kn->value.block(b * L, h * hd, L, hd);
      const auto vb = vn->value.block(b * L, h * hd, L, hd);
      Mat<S> scores = qb * kb.transpose() * inv_sqrt;
      if (biasn && spec.rel_buckets)
        for (Eigen::Index r = 0; r < L; ++r)
          for (Eigen::Index c = 0; c < L; ++c)
            scores(r, c) += biasn->value(h, (*spec.rel_buckets)(r, c));
      if (mask) scores += mask->middleRows(b * L, L);
      for (Eigen::Index r = 0; r < L; ++r) {
        const S mx = scores.row(r).maxCoeff();
        scores.row(r) = (scores.row(r).array() - mx).exp();
        scores.row(r) /= scores.row(r).sum();
      }
      if (q.graph->round_half) half_roundtrip_inplace(scores);
      if (capture) capture->push_back(scores);
      probs->push_back(scores);
      if (dropout_mask) {
        Mat<S> dropped = scores.cwiseProduct(
            dropout_mask->middleRows((Eigen::Index(b) * H + h) * L, L));
        out.block(b * L, h * hd, L, hd).noalias() = dropped * vb;
      } else {
        out.block(b * L, h * hd, L, hd).noalias() = scores * vb;
      }
    }

  const bool ng = qn->needs_grad || kn->needs_grad || vn->needs_grad ||
                  (biasn && biasn->needs_grad);
  auto* n = q.graph->add(std::move(out), ng);
  if (ng) {
    std::shared_ptr<Mat<S>> dmask_copy;
    if (dropout_mask) dmask_copy = std::make_shared<Mat<S>>(*dropout_mask);
    std::shared_ptr<Eigen::MatrixXi> buckets;  // owned: backward outlives the caller
    if (spec.rel_buckets) buckets = std::make_shared<Eigen::MatrixXi>(*spec.rel_buckets);
    n->backprop = [qn, kn, vn, biasn, n, probs, dmask_copy, buckets, B, H, L,
                   hd, inv_sqrt] {
      Mat<S> dq = Mat<S>::Zero(qn->value.rows(), qn->value.cols());
      Mat<S> dk = Mat<S>::Zero(kn->value.rows(), kn->value.cols());
      Mat<S> dv = Mat<S>::Zero(vn->value.rows(), vn->value.cols());
      Mat<S> dbias;
      if (biasn) dbias = Mat<S>::Zero(biasn->value.rows(), biasn->value.cols());
      for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h) {
          const Mat<S>& p = (*probs)[std::size_t(b) * H + h];  // pre-dropout
          const auto qb = qn->value.block(b * L, h * hd, L, hd);
          const auto kb = kn->value.block(b * L, h * hd, L, hd);
          const auto vb = vn->value.block(b * L, h * hd, L, hd);
          const auto dout = n->grad.block(b * L, h * hd, L, hd);
          Mat<S> dp = dout * vb.transpose();
          if (dmask_copy) {
            const auto m = dmask_copy->middleRows((Eigen::Index(b) * H + h) * L, L);
            dv.block(b * L, h * hd, L, hd).noalias() +=
                p.cwiseProduct(m).transpose() * dout;
            dp = dp.cwiseProduct(m);
          } else {
            dv.block(b * L, h * hd, L, hd).noalias() += p.transpose() * dout;
          }
          Mat<S> ds(L, L);
          for (Eigen::Index r = 0; r < L; ++r) {
            const S dot = dp.row(r).dot(p.row(r));
            ds.row(r) = p.row(r).cwiseProduct((dp.row(r).array() - dot).matrix());
          }
          dq.block(b * L, h * hd, L, hd).noalias() += ds * kb * inv_sqrt;
          dk.block(b * L, h * hd, L, hd).noalias() += ds.transpose() * qb * inv_sqrt;
          if (biasn && buckets)
            for (Eigen::Index r = 0; r < L; ++r)
              for (Eigen::Index c = 0; c < L; ++c)
                dbias(h, (*buckets)(r, c)) += ds(r, c);
        }
      if (qn->needs_grad) Graph<S>::accumulate(qn, dq);
      if (kn->needs_grad) Graph<S>::accumulate(kn, dk);
      if (vn->needs_grad) Graph<S>::accumulate(vn, dv);
      if (biasn && biasn->needs_grad) Graph<S>::accumulate(biasn, dbias);
    };
  }
  return {q.graph, n};
}

template <typename S>
bool all_finite(const Mat<S>& m) {
  return m.allFinite();
}

}  // namespace plmkit::nn
