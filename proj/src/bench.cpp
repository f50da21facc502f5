#include "plmkit/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>

#include <json.hpp>

namespace plmkit {

std::string BenchReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : cells)
    rows.push_back({{"length", c.length},
                    {"batch", c.batch},
                    {"repeats", c.repeats},
                    {"mean_seconds_per_protein", c.mean_seconds_per_protein},
                    {"std_seconds", c.std_seconds},
                    {"supported", c.supported}});
  return nlohmann::json{{"grid", rows},
                        {"environment", environment},
                        {"precision", precision},
                        {"tokens_per_second", tokens_per_second}}
      .dump(2);
}

void BenchReport::write_table(std::ostream& out) const {
  char line[160];
  std::snprintf(line, sizeof line, "%8s %8s %8s %22s %14s\n", "length", "batch",
                "repeats", "sec/protein (mean)", "std");
  out << line;
  for (const auto& c : cells) {
    if (!c.supported) {
      std::snprintf(line, sizeof line, "%8d %8d %8d %22s %14s\n", c.length, c.batch,
                    c.repeats, "unsupported", "-");
    } else {
      std::snprintf(line, sizeof line, "%8d %8d %8d %22.6f %14.6f\n", c.length,
                    c.batch, c.repeats, c.mean_seconds_per_protein, c.std_seconds);
    }
    out << line;
  }
  std::snprintf(line, sizeof line, "aggregate throughput: %.0f tokens/second (%s)\n",
                tokens_per_second, precision.c_str());
  out << line;
}

BenchReport bench_inference(const Checkpoint& ckpt, const std::vector<int>& lengths,
                            const std::vector<int>& batches, int repeats,
                            Precision precision, std::uint64_t seed) {
  if (repeats < 1) throw ContractError("bench: repeats must be >= 1");
  if (lengths.empty() || batches.empty())
    throw ContractError("bench: empty length or batch grid");

  BenchReport report;
  report.precision = precision_name(precision);
  report.environment = std::to_string(std::thread::hardware_concurrency()) +
                       " hardware threads, single-threaded inference";

  Rng rng(seed);
  double total_tokens = 0.0, total_seconds = 0.0;
  for (int length : lengths) {
    for (int batch : batches) {
      BenchCell cell;
      cell.length = length;
      cell.batch = batch;
      cell.repeats = repeats;
      if (ckpt.config.positional == PositionalKind::LearnedAbsolute &&
          length > ckpt.config.max_positions) {
        cell.supported = false;
        report.cells.push_back(cell);
        continue;
      }

      Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> inputs(batch,
                                                                                 length);
      Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
          valid(batch, length);
      valid.setOnes();
      for (Eigen::Index i = 0; i < inputs.size(); ++i)
        inputs.data()[i] = int(rng.uniform_int(20));

      encode(ckpt, inputs, valid, false, precision == Precision::Half);  // warm-up

      std::vector<double> per_protein;
      per_protein.reserve(std::size_t(repeats));
      for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        encode(ckpt, inputs, valid, false, precision == Precision::Half);
        const double sec =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        per_protein.push_back(sec / double(batch));
        total_tokens += double(batch) * double(length);
        total_seconds += sec;
      }
      double mean = 0.0;
      for (double v : per_protein) mean += v;
      mean /= double(per_protein.size());
      double var = 0.0;
      for (double v : per_protein) var += (v - mean) * (v - mean);
      var /= double(per_protein.size());
      cell.mean_seconds_per_protein = mean;
      cell.std_seconds = std::sqrt(var);
      report.cells.push_back(cell);
    }
  }
  report.tokens_per_second = total_seconds > 0 ? total_tokens / total_seconds : 0.0;
  return report;
}

}  // namespace plmkit
