#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "plmkit/common.hpp"

namespace plmkit {

// Per-protein label sequences as class indices; a per-protein task is the
// length-1 case.
struct LabeledSeq {
  std::string id;
  std::vector<int> labels;
};

struct MetricsReport {
  std::string task;
  double micro = 0.0;  // 100 * correct / total
  double macro = 0.0;  // mean of per-protein accuracies
  double bootstrap_se = 0.0;
  long bootstrap_b = 0;
  std::uint64_t seed = 0;
  std::size_t n_proteins = 0;
  std::vector<std::pair<std::string, double>> per_protein;

  std::string to_json() const;
};

// Q-accuracy over aligned predictions and gold labels (aligned by id; the
// report lists proteins in gold order).
MetricsReport q_accuracy(const std::vector<LabeledSeq>& predictions,
                         const std::vector<LabeledSeq>& gold, int n_states,
                         const std::string& task_tag = "");

// Standard deviation of B bootstrap resample means (resampling proteins with
// replacement); deterministic given the seed.
double bootstrap_se(const std::vector<double>& per_protein_scores, long resamples,
                    std::uint64_t seed);

struct ComparisonReport {
  double a_wins = 0.0;  // fractions
  double b_wins = 0.0;
  double ties = 0.0;
  std::size_t n = 0;
  std::vector<std::tuple<std::string, double, double>> scatter;  // id, a, b

  std::string to_json() const;
  void write_scatter_csv(std::ostream& out) const;
};

ComparisonReport compare_per_protein(
    const std::vector<std::pair<std::string, double>>& scores_a,
    const std::vector<std::pair<std::string, double>>& scores_b);

struct BucketReport {
  struct Bucket {
    std::string label;
    std::size_t n = 0;
    double macro = 0.0;
  };
  std::vector<long> upper_bounds;  // bucket i holds values <= bound i
  std::vector<Bucket> buckets;     // upper_bounds.size() + 1 entries

  std::string to_json() const;
};

// Partition proteins by Neff value; default boundaries {1, 10} give the
// buckets {Neff = 1}, {2..10}, {> 10}.
BucketReport neff_bucket_report(
    const std::vector<std::pair<std::string, double>>& per_protein_scores,
    const std::map<std::string, long>& neff_of,
    std::vector<long> upper_bounds = {1, 10});

// Spearman rank correlation with average ranks for ties. Constant input on
// either side is an error (undefined correlation).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace plmkit
