#pragma once

#include <map>
#include <string>
#include <vector>

#include "plmkit/graph.hpp"
#include "plmkit/masking.hpp"
#include "plmkit/vocab.hpp"

namespace plmkit {

enum class PositionalKind { LearnedAbsolute, RelativeBucketed };

inline const char* positional_name(PositionalKind k) {
  return k == PositionalKind::LearnedAbsolute ? "learned-absolute"
                                              : "relative-bucketed";
}

inline PositionalKind positional_from_name(const std::string& s) {
  if (s == "learned-absolute") return PositionalKind::LearnedAbsolute;
  if (s == "relative-bucketed") return PositionalKind::RelativeBucketed;
  throw ContractError("unknown positional kind: " + s);
}

struct EncoderConfig {
  int layers = 4;
  int d_model = 128;
  int ff_width = 512;
  int heads = 4;
  PositionalKind positional = PositionalKind::RelativeBucketed;
  int max_positions = 256;    // learned-absolute only
  int rel_buckets = 32;       // relative-bucketed only
  int rel_max_distance = 128;
  bool share_layers = false;
  double dropout = 0.1;
  int vocab_size = Vocabulary::kSize;

  void validate() const {
    if (layers < 1 || d_model < 1 || ff_width < 1 || heads < 1 || vocab_size < 1)
      throw ContractError("encoder config: all counts must be >= 1");
    if (d_model % heads != 0)
      throw ContractError("encoder config: d_model must be divisible by heads");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ContractError("encoder config: dropout must be in [0,1)");
    if (positional == PositionalKind::LearnedAbsolute && max_positions < 1)
      throw ContractError("encoder config: max_positions must be >= 1");
    if (positional == PositionalKind::RelativeBucketed &&
        (rel_buckets < 2 || rel_max_distance < 2))
      throw ContractError("encoder config: relative bucket settings too small");
  }
};

struct PhaseMeta {
  int max_len = 0;
  long steps = 0;
  long batch_size = 0;
};

struct TrainingMeta {
  long steps = 0;
  long global_batch_size = 0;
  long samples_seen = 0;  // sum over phases of steps * batch
  std::string corpus_id;
  std::uint64_t seed = 0;
  std::string optimizer;
  std::string schedule;
  std::vector<PhaseMeta> phases;

  void validate() const {
    long expected = 0;
    for (const auto& p : phases) expected += p.steps * p.batch_size;
    if (phases.empty()) expected = steps * global_batch_size;
    if (samples_seen != expected)
      throw ContractError("checkpoint meta: samples_seen inconsistent with phases");
  }
};

template <typename S>
using ParamMap = std::map<std::string, nn::Mat<S>>;

struct Checkpoint {
  EncoderConfig config;
  ParamMap<float> params;
  TrainingMeta meta;
};

// ---- parameter construction ----

namespace detail {

inline std::string layer_prefix(const EncoderConfig& cfg, int layer) {
  return cfg.share_layers ? std::string("layer.shared")
                          : "layer." + std::to_string(layer);
}

template <typename S>
ParamMap<S> empty_params(const EncoderConfig& cfg) {
  using nn::Mat;
  ParamMap<S> p;
  p["embed.tok"] = Mat<S>(cfg.vocab_size, cfg.d_model);
  if (cfg.positional == PositionalKind::LearnedAbsolute)
    p["embed.pos"] = Mat<S>(cfg.max_positions, cfg.d_model);
  else
    p["rel_bias"] = Mat<S>(cfg.heads, cfg.rel_buckets);
  const int blocks = cfg.share_layers ? 1 : cfg.layers;
  for (int l = 0; l < blocks; ++l) {
    const std::string pre = layer_prefix(cfg, l) + ".";
    p[pre + "attn.norm.gamma"] = Mat<S>(1, cfg.d_model);
    p[pre + "attn.norm.beta"] = Mat<S>(1, cfg.d_model);
    for (const char* w : {"wq", "wk", "wv", "wo"})
      p[pre + "attn." + w] = Mat<S>(cfg.d_model, cfg.d_model);
    for (const char* b : {"bq", "bk", "bv", "bo"})
      p[pre + "attn." + b] = Mat<S>(1, cfg.d_model);
    p[pre + "ffn.norm.gamma"] = Mat<S>(1, cfg.d_model);
    p[pre + "ffn.norm.beta"] = Mat<S>(1, cfg.d_model);
    p[pre + "ffn.w1"] = Mat<S>(cfg.d_model, cfg.ff_width);
    p[pre + "ffn.b1"] = Mat<S>(1, cfg.ff_width);
    p[pre + "ffn.w2"] = Mat<S>(cfg.ff_width, cfg.d_model);
    p[pre + "ffn.b2"] = Mat<S>(1, cfg.d_model);
  }
  p["final_norm.gamma"] = Mat<S>(1, cfg.d_model);
  p["final_norm.beta"] = Mat<S>(1, cfg.d_model);
  return p;
}

inline bool is_zero_init(const std::string& name) {
  const auto dot = name.rfind('.');
  const std::string last = name.substr(dot + 1);
  return last == "beta" || (last.size() == 2 && last[0] == 'b');
}

inline bool is_one_init(const std::string& name) {
  return name.size() > 5 && name.ends_with("gamma");
}

}  // namespace detail

// Truncated-normal initialization (sigma 0.02, clipped at 2 sigma); biases
// zero, norm scales one. Parameters are filled in name order from a single
// stream, so a seed pins every value.
template <typename S>
ParamMap<S> init_params(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamMap<S> params = detail::empty_params<S>(cfg);
  Rng rng(seed);
  for (auto& [name, mat] : params) {
    if (detail::is_zero_init(name)) {
      mat.setZero();
    } else if (detail::is_one_init(name)) {
      mat.setOnes();
    } else {
      for (Eigen::Index i = 0; i < mat.size(); ++i)
        mat.data()[i] = S(rng.truncated_normal(0.02));
    }
  }
  return params;
}

inline Checkpoint init_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.params = init_params<float>(cfg, seed);
  ckpt.meta.seed = seed;
  return ckpt;
}

// T5-style signed-distance bucketing: exact buckets up to num_buckets/4,
// log-spaced out to max_distance, separate halves per direction.
inline Eigen::MatrixXi relative_buckets(Eigen::Index len, int num_buckets,
                                        int max_distance) {
  const int half = num_buckets / 2;
  const int max_exact = half / 2;
  Eigen::MatrixXi out(len, len);
  for (Eigen::Index q = 0; q < len; ++q)
    for (Eigen::Index k = 0; k < len; ++k) {
      long n = q - k;  // negative when key is to the right
      int bucket = 0;
      if (n < 0) {
        bucket += half;
        n = -n;
      }
      if (n < max_exact) {
        bucket += int(n);
      } else {
        const double v = double(max_exact) +
                         std::log(double(n) / max_exact) /
                             std::log(double(max_distance) / max_exact) *
                             (half - max_exact);
        bucket += std::min(int(v), half - 1);
      }
      out(q, k) = bucket;
    }
  return out;
}

// ---- forward pass ----

template <typename S>
struct EncoderForward {
  nn::Graph<S> graph;
  std::map<std::string, nn::NodeRef<S>> param_nodes;
  nn::NodeRef<S> hidden;  // (B*L) x d
  Eigen::Index batch = 0;
  Eigen::Index seq_len = 0;
  // attention[layer][b*heads + h] is the L x L weight matrix
  std::vector<std::vector<nn::Mat<S>>> attention;
};

struct EncodeOptions {
  bool train = false;
  bool capture_attention = false;
  bool half = false;  // emulate binary16 activations during inference
  // One stream per example when training with dropout; keyed by position in
  // the batch so results do not depend on how a global batch was split.
  std::vector<Rng>* dropout_rngs = nullptr;
};

namespace detail {

template <typename S>
nn::Mat<S> per_example_mask(Eigen::Index rows_per_example, Eigen::Index cols,
                            double rate, std::vector<Rng>& rngs) {
  nn::Mat<S> m(rows_per_example * Eigen::Index(rngs.size()), cols);
  for (std::size_t b = 0; b < rngs.size(); ++b)
    m.middleRows(Eigen::Index(b) * rows_per_example, rows_per_example) =
        nn::dropout_mask<S>(rows_per_example, cols, rate, rngs[b]);
  return m;
}

}  // namespace detail

// Pre-norm transformer encoder over a PAD-filled batch. `inputs` and `valid`
// are batch x L; the result concatenates examples row-wise ((B*L) x d).
template <typename S>
void encoder_forward(
    EncoderForward<S>& fwd, const EncoderConfig& cfg, const ParamMap<S>& params,
    const Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& inputs,
    const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& valid,
    const EncodeOptions& opts, bool params_need_grad) {
  using namespace nn;
  cfg.validate();
  const Eigen::Index B = inputs.rows();
  const Eigen::Index L = inputs.cols();
  if (valid.rows() != B || valid.cols() != L)
    throw ContractError("encode: validity mask shape mismatch");
  if (cfg.positional == PositionalKind::LearnedAbsolute && L > cfg.max_positions)
    throw ContractError("encode: sequence length " + std::to_string(L) +
                        " exceeds the absolute position table (" +
                        std::to_string(cfg.max_positions) + ")");
  const bool use_dropout = opts.train && cfg.dropout > 0.0;
  if (use_dropout &&
      (!opts.dropout_rngs || Eigen::Index(opts.dropout_rngs->size()) != B))
    throw ContractError("encode: training with dropout needs one rng per example");

  Graph<S>& g = fwd.graph;
  g.train_mode = opts.train;
  g.round_half = opts.half && !opts.train;
  fwd.batch = B;
  fwd.seq_len = L;

  for (const auto& [name, mat] : params)
    fwd.param_nodes.emplace(name, leaf(g, mat, params_need_grad));
  auto P = [&](const std::string& name) -> NodeRef<S> {
    auto it = fwd.param_nodes.find(name);
    if (it == fwd.param_nodes.end())
      throw ContractError("encode: missing parameter " + name);
    return it->second;
  };

  // token ids flattened row-major; every id must be in vocabulary
  std::vector<int> flat_ids;
  flat_ids.reserve(std::size_t(B) * std::size_t(L));
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index t = 0; t < L; ++t) {
      const int id = inputs(b, t);
      if (id < 0 || id >= cfg.vocab_size)
        throw ContractError("encode: token id out of vocabulary range");
      flat_ids.push_back(id);
    }

  NodeRef<S> x = embedding(P("embed.tok"), flat_ids);
  if (cfg.positional == PositionalKind::LearnedAbsolute) {
    std::vector<int> pos_ids;
    pos_ids.reserve(flat_ids.size());
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index t = 0; t < L; ++t) pos_ids.push_back(int(t));
    x = add(x, embedding(P("embed.pos"), pos_ids));
  }

  // additive key mask: 0 on valid keys, -1e30 on PAD keys
  Mat<S> key_mask(B * L, L);
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index c = 0; c < L; ++c) {
      const S v = valid(b, c) ? S(0) : S(-1e30);
      for (Eigen::Index r = 0; r < L; ++r) key_mask(b * L + r, c) = v;
    }
  }

  Eigen::MatrixXi buckets;
  AttentionSpec spec;
  spec.heads = cfg.heads;
  spec.batch = int(B);
  spec.seq_len = L;
  spec.additive_mask = &key_mask;
  if (cfg.positional == PositionalKind::RelativeBucketed) {
    buckets = relative_buckets(L, cfg.rel_buckets, cfg.rel_max_distance);
    spec.rel_buckets = &buckets;
  }
  NodeRef<S> rel_bias =
      cfg.positional == PositionalKind::RelativeBucketed ? P("rel_bias") : NodeRef<S>{};

  if (opts.capture_attention) fwd.attention.resize(std::size_t(cfg.layers));

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string pre = plmkit::detail::layer_prefix(cfg, l) + ".";

    auto normed = layer_norm(x, P(pre + "attn.norm.gamma"), P(pre + "attn.norm.beta"));
    auto q = add_row_bias(matmul(normed, P(pre + "attn.wq")), P(pre + "attn.bq"));
    auto k = add_row_bias(matmul(normed, P(pre + "attn.wk")), P(pre + "attn.bk"));
    auto v = add_row_bias(matmul(normed, P(pre + "attn.wv")), P(pre + "attn.bv"));

    Mat<S> attn_drop;
    const Mat<S>* attn_drop_ptr = nullptr;
    if (use_dropout) {
      attn_drop = plmkit::detail::per_example_mask<S>(Eigen::Index(cfg.heads) * L, L,
                                              cfg.dropout, *opts.dropout_rngs);
      attn_drop_ptr = &attn_drop;
    }
    auto ctx = multihead_attention(
        q, k, v, rel_bias, spec, attn_drop_ptr,
        opts.capture_attention ? &fwd.attention[std::size_t(l)] : nullptr);
    auto attn_out = add_row_bias(matmul(ctx, P(pre + "attn.wo")), P(pre + "attn.bo"));
    x = add(x, attn_out);

    auto ff_normed = layer_norm(x, P(pre + "ffn.norm.gamma"), P(pre + "ffn.norm.beta"));
    auto h = gelu(add_row_bias(matmul(ff_normed, P(pre + "ffn.w1")), P(pre + "ffn.b1")));
    if (use_dropout) {
      const Mat<S> ffn_drop = plmkit::detail::per_example_mask<S>(
          L, Eigen::Index(cfg.ff_width), cfg.dropout, *opts.dropout_rngs);
      h = dropout(h, ffn_drop);
    }
    auto ff_out = add_row_bias(matmul(h, P(pre + "ffn.w2")), P(pre + "ffn.b2"));
    x = add(x, ff_out);
  }

  fwd.hidden = layer_norm(x, P("final_norm.gamma"), P("final_norm.beta"));
}

// ---- denoising loss ----

template <typename S>
struct MlmLoss {
  nn::NodeRef<S> loss;   // scalar node
  double accuracy = 0;   // argmax over the 21 residue classes
  std::size_t targets = 0;
};

// Cross-entropy over target positions only; logits are tied to the token
// embedding table restricted to the 21 residue classes.
template <typename S>
MlmLoss<S> mlm_loss(EncoderForward<S>& fwd, const std::vector<std::size_t>& target_rows,
                    const std::vector<TokenId>& target_ids) {
  using namespace nn;
  if (target_rows.empty())
    throw ContractError("mlm_loss: empty targets (batch should be skipped)");
  if (target_rows.size() != target_ids.size())
    throw ContractError("mlm_loss: target rows/ids size mismatch");

  IndexVec rows(target_rows.begin(), target_rows.end());
  auto picked = gather_rows(fwd.hidden, rows);
  auto residue_embed = row_block(fwd.param_nodes.at("embed.tok"), 0,
                                 Vocabulary::kResidueTokens);
  auto logits = matmul_nt(picked, residue_embed);

  std::vector<int> targets;
  targets.reserve(target_ids.size());
  for (TokenId t : target_ids) {
    if (!Vocabulary::is_residue(t))
      throw ContractError("mlm_loss: target id is not a residue token");
    targets.push_back(int(t));
  }

  MlmLoss<S> out;
  out.loss = cross_entropy(logits, targets);
  out.targets = targets.size();
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < logits.value().rows(); ++r) {
    Eigen::Index argmax = 0;
    logits.value().row(r).maxCoeff(&argmax);
    if (int(argmax) == targets[std::size_t(r)]) correct++;
  }
  out.accuracy = double(correct) / double(targets.size());
  return out;
}

// ---- inference wrapper ----

struct EncodeResult {
  nn::Mat<float> hidden;  // (B*L) x d
  Eigen::Index batch = 0;
  Eigen::Index seq_len = 0;
  std::vector<std::vector<nn::Mat<float>>> attention;
};

inline EncodeResult encode(
    const Checkpoint& ckpt,
    const Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& inputs,
    const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& valid,
    bool capture_attention = false, bool half = false) {
  EncodeOptions opts;
  opts.train = false;
  opts.capture_attention = capture_attention;
  opts.half = half;

  const ParamMap<float>* params = &ckpt.params;
  ParamMap<float> rounded;
  if (half) {
    // parameters pass through binary16 before the forward pass
    rounded = ckpt.params;
    for (auto& [name, mat] : rounded) half_roundtrip_inplace(mat);
    params = &rounded;
  }

  EncoderForward<float> fwd;
  encoder_forward(fwd, ckpt.config, *params, inputs, valid, opts, false);
  EncodeResult result;
  result.hidden = fwd.hidden.value();
  result.batch = fwd.batch;
  result.seq_len = fwd.seq_len;
  result.attention = std::move(fwd.attention);
  return result;
}

// ---- checkpoint file format (PLMC) ----

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace plmkit
