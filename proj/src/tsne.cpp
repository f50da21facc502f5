#include "plmkit/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace plmkit {

namespace {

using Md = nn::Mat<double>;

Md squared_distances(const Md& x) {
  const Eigen::Index n = x.rows();
  Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Md d = sq.replicate(1, n) + sq.transpose().replicate(n, 1) - 2.0 * x * x.transpose();
  d.diagonal().setZero();
  return d.cwiseMax(0.0);
}

// conditional distribution row for precision beta; returns entropy in nats
double row_entropy(const Md& dist, Eigen::Index i, double beta,
                   Eigen::RowVectorXd& p) {
  const Eigen::Index n = dist.rows();
  double sum = 0.0, dot = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == i) {
      p(j) = 0.0;
      continue;
    }
    p(j) = std::exp(-beta * dist(i, j));
    sum += p(j);
    dot += p(j) * dist(i, j);
  }
  if (sum <= 0.0) return 0.0;
  p /= sum;
  return std::log(sum) + beta * dot / sum;
}

double kl_divergence(const Md& p, const Md& q) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      if (i != j && p(i, j) > 0.0) kl += p(i, j) * std::log(p(i, j) / q(i, j));
  return kl;
}

// Student-t joint distribution over the embedding; also returns the
// unnormalized kernel for the gradient
void student_t(const Md& y, Md& q, Md& numerator) {
  const Eigen::Index n = y.rows();
  numerator = squared_distances(y);
  double z = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) {
        numerator(i, j) = 0.0;
        continue;
      }
      numerator(i, j) = 1.0 / (1.0 + numerator(i, j));
      z += numerator(i, j);
    }
  q = (numerator / z).cwiseMax(1e-12);
  q.diagonal().setZero();
}

}  // namespace

TsneResult tsne(const Md& points, const TsneParams& params) {
  const Eigen::Index n = points.rows();
  if (n < 4) throw ContractError("tsne: need at least 4 points");
  if (params.perplexity >= double(n))
    throw ContractError("tsne: perplexity must be below the number of points");
  if (params.perplexity <= 0 || params.iterations < 1)
    throw ContractError("tsne: bad parameters");

  Md x = points;
  if (params.standardize) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double mean = x.col(c).mean();
      const double sd = std::sqrt((x.col(c).array() - mean).square().mean());
      x.col(c).array() -= mean;
      if (sd > 0.0) x.col(c) /= sd;
    }
  }

  const Md dist = squared_distances(x);
  const double target_entropy = std::log(params.perplexity);

  // per-point bandwidth by binary search on conditional entropy
  Md conditional(n, n);
  TsneResult result;
  Eigen::RowVectorXd row(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    double entropy = row_entropy(dist, i, beta, row);
    for (int iter = 0; iter < 200 && std::abs(entropy - target_entropy) >
                                         params.entropy_tol; ++iter) {
      if (entropy > target_entropy) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = std::isinf(lo) ? beta / 2.0 : (beta + lo) / 2.0;
      }
      entropy = row_entropy(dist, i, beta, row);
    }
    result.max_entropy_error =
        std::max(result.max_entropy_error, std::abs(entropy - target_entropy));
    conditional.row(i) = row;
  }

  // symmetrized joint affinities
  Md p = (conditional + conditional.transpose()) / (2.0 * double(n));
  p = p.cwiseMax(1e-12);
  p.diagonal().setZero();

  // Gaussian init, sigma 1e-4
  Rng rng(params.seed);
  Md y(n, 2);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.normal() * 1e-4;

  Md q, numerator;
  student_t(y, q, numerator);
  result.initial_kl = kl_divergence(p, q);

  Md velocity = Md::Zero(n, 2);
  Md gains = Md::Ones(n, 2);
  for (int iter = 0; iter < params.iterations; ++iter) {
    const double exaggeration =
        iter < params.exaggeration_iters ? params.early_exaggeration : 1.0;
    const double momentum = iter < params.momentum_switch_iter
                                ? params.momentum_initial
                                : params.momentum_final;
    if (iter > 0) student_t(y, q, numerator);

    Md grad = Md::Zero(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double mult = (exaggeration * p(i, j) - q(i, j)) * numerator(i, j);
        grad.row(i) += 4.0 * mult * (y.row(i) - y.row(j));
      }
    }

    for (Eigen::Index e = 0; e < grad.size(); ++e) {
      const bool same_sign = (grad.data()[e] > 0.0) == (velocity.data()[e] > 0.0);
      gains.data()[e] = same_sign ? gains.data()[e] * 0.8 : gains.data()[e] + 0.2;
      gains.data()[e] = std::max(gains.data()[e], 0.01);
      velocity.data()[e] = momentum * velocity.data()[e] -
                           params.learning_rate * gains.data()[e] * grad.data()[e];
      y.data()[e] += velocity.data()[e];
    }
    y.rowwise() -= y.colwise().mean();
  }

  student_t(y, q, numerator);
  result.final_kl = kl_divergence(p, q);
  result.coords = std::move(y);
  if (!result.coords.allFinite())
    throw InternalError("tsne: non-finite coordinates produced");
  return result;
}

}  // namespace plmkit
