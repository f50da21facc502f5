#pragma once

#include <cstdint>

#include "plmkit/graph.hpp"

namespace plmkit {

struct TsneParams {
  double perplexity = 30.0;
  int iterations = 3000;
  std::uint64_t seed = 42;
  bool standardize = false;  // optional z-scoring of input columns
  // descent constants from the originating publication
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  double learning_rate = 200.0;
  double momentum_initial = 0.5;
  double momentum_final = 0.8;
  int momentum_switch_iter = 250;
  double entropy_tol = 1e-5;  // bandwidth search stops within this of log(perplexity)
};

struct TsneResult {
  nn::Mat<double> coords;  // n x 2
  double initial_kl = 0.0;
  double final_kl = 0.0;
  double max_entropy_error = 0.0;  // max_i |H_i - log(perplexity)| after search
};

// Exact O(n^2) t-SNE: per-point Gaussian bandwidths found by binary search on
// conditional entropy, symmetrized affinities, Student-t low-dimensional
// kernel, early exaggeration, and gain-adapted momentum descent. Deterministic
// for a fixed seed.
TsneResult tsne(const nn::Mat<double>& points, const TsneParams& params);

}  // namespace plmkit
