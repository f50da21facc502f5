#pragma once

#include <string>
#include <vector>

#include "plmkit/embed.hpp"
#include "plmkit/encoder.hpp"

namespace plmkit {

struct BenchCell {
  int length = 0;
  int batch = 0;
  int repeats = 0;
  double mean_seconds_per_protein = 0.0;
  double std_seconds = 0.0;
  bool supported = true;  // false when the length exceeds the model limit
};

struct BenchReport {
  std::vector<BenchCell> cells;  // one row per (length, batch) pair
  std::string environment;
  std::string precision;
  double tokens_per_second = 0.0;  // aggregate throughput over timed cells

  std::string to_json() const;
  void write_table(std::ostream& out) const;
};

// Inference-speed grid over synthetic random sequences. One warm-up run per
// cell is excluded; cells run strictly sequentially.
BenchReport bench_inference(const Checkpoint& ckpt, const std::vector<int>& lengths,
                            const std::vector<int>& batches, int repeats,
                            Precision precision, std::uint64_t seed = 42);

}  // namespace plmkit
