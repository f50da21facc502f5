#include "plmkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include <json.hpp>

namespace plmkit {

namespace {

using nlohmann::json;

json per_protein_json(const std::vector<std::pair<std::string, double>>& scores) {
  json arr = json::array();
  for (const auto& [id, score] : scores)
    arr.push_back(json{{"id", id}, {"score", score}});
  return arr;
}

}  // namespace

std::string MetricsReport::to_json() const {
  json j{{"task", task},
         {"micro", micro},
         {"macro", macro},
         {"bootstrap_se", bootstrap_se},
         {"bootstrap_b", bootstrap_b},
         {"seed", seed},
         {"n_proteins", n_proteins},
         {"per_protein", per_protein_json(per_protein)}};
  return j.dump(2);
}

MetricsReport q_accuracy(const std::vector<LabeledSeq>& predictions,
                         const std::vector<LabeledSeq>& gold, int n_states,
                         const std::string& task_tag) {
  if (gold.empty()) throw UserError("q_accuracy: empty input");
  if (n_states < 2) throw ContractError("q_accuracy: need at least 2 states");

  std::map<std::string, const LabeledSeq*> pred_of;
  for (const auto& p : predictions) {
    if (!pred_of.emplace(p.id, &p).second)
      throw UserError("q_accuracy: duplicate prediction id '" + p.id + "'");
  }

  MetricsReport report;
  report.task = task_tag;
  std::size_t correct = 0, total = 0;
  double macro_sum = 0.0;
  for (const auto& g : gold) {
    const auto it = pred_of.find(g.id);
    if (it == pred_of.end())
      throw UserError("q_accuracy: no prediction for '" + g.id + "'");
    const LabeledSeq& p = *it->second;
    if (p.labels.size() != g.labels.size())
      throw UserError("q_accuracy: length mismatch for '" + g.id + "'");
    if (g.labels.empty())
      throw UserError("q_accuracy: empty labels for '" + g.id + "'");
    std::size_t protein_correct = 0;
    for (std::size_t i = 0; i < g.labels.size(); ++i) {
      if (g.labels[i] < 0 || g.labels[i] >= n_states || p.labels[i] < 0 ||
          p.labels[i] >= n_states)
        throw UserError("q_accuracy: label out of range for '" + g.id + "'");
      if (g.labels[i] == p.labels[i]) protein_correct++;
    }
    correct += protein_correct;
    total += g.labels.size();
    const double score = 100.0 * double(protein_correct) / double(g.labels.size());
    macro_sum += score;
    report.per_protein.emplace_back(g.id, score);
  }
  if (pred_of.size() != gold.size())
    throw UserError("q_accuracy: predictions contain ids absent from gold");

  report.micro = 100.0 * double(correct) / double(total);
  report.macro = macro_sum / double(gold.size());
  report.n_proteins = gold.size();
  return report;
}

double bootstrap_se(const std::vector<double>& scores, long resamples,
                    std::uint64_t seed) {
  if (scores.empty()) throw ContractError("bootstrap_se: need at least one score");
  if (resamples < 1) throw ContractError("bootstrap_se: need at least one resample");
  Rng rng(seed);
  const std::uint32_t n = std::uint32_t(scores.size());
  std::vector<double> means;
  means.reserve(std::size_t(resamples));
  for (long b = 0; b < resamples; ++b) {
    double sum = 0.0;
    for (std::uint32_t i = 0; i < n; ++i) sum += scores[rng.uniform_int(n)];
    means.push_back(sum / double(n));
  }
  const double mean = std::accumulate(means.begin(), means.end(), 0.0) /
                      double(means.size());
  double var = 0.0;
  for (double m : means) var += (m - mean) * (m - mean);
  var /= double(means.size());
  return std::sqrt(var);
}

std::string ComparisonReport::to_json() const {
  json j{{"a_wins", a_wins}, {"b_wins", b_wins}, {"ties", ties}, {"n", n}};
  return j.dump(2);
}

void ComparisonReport::write_scatter_csv(std::ostream& out) const {
  out << "id,score_a,score_b\n";
  for (const auto& [id, a, b] : scatter) out << id << ',' << a << ',' << b << '\n';
}

ComparisonReport compare_per_protein(
    const std::vector<std::pair<std::string, double>>& scores_a,
    const std::vector<std::pair<std::string, double>>& scores_b) {
  std::map<std::string, double> b_of;
  for (const auto& [id, score] : scores_b) b_of[id] = score;
  std::set<std::string> only_a, only_b;
  for (const auto& [id, _] : scores_a)
    if (!b_of.count(id)) only_a.insert(id);
  {
    std::set<std::string> a_ids;
    for (const auto& [id, _] : scores_a) a_ids.insert(id);
    for (const auto& [id, _] : scores_b)
      if (!a_ids.count(id)) only_b.insert(id);
  }
  if (!only_a.empty() || !only_b.empty()) {
    std::string msg = "compare_per_protein: id sets differ;";
    for (const auto& id : only_a) msg += " only-in-A:" + id;
    for (const auto& id : only_b) msg += " only-in-B:" + id;
    throw UserError(msg);
  }
  if (scores_a.empty()) throw UserError("compare_per_protein: empty input");

  ComparisonReport report;
  std::size_t a_wins = 0, b_wins = 0, ties = 0;
  for (const auto& [id, a] : scores_a) {
    const double b = b_of.at(id);
    if (a > b)
      a_wins++;
    else if (b > a)
      b_wins++;
    else
      ties++;
    report.scatter.emplace_back(id, a, b);
  }
  report.n = scores_a.size();
  report.a_wins = double(a_wins) / double(report.n);
  report.b_wins = double(b_wins) / double(report.n);
  report.ties = double(ties) / double(report.n);
  return report;
}

std::string BucketReport::to_json() const {
  json arr = json::array();
  for (const auto& b : buckets)
    arr.push_back(json{{"label", b.label}, {"n", b.n}, {"macro", b.macro}});
  return json{{"upper_bounds", upper_bounds}, {"buckets", arr}}.dump(2);
}

BucketReport neff_bucket_report(
    const std::vector<std::pair<std::string, double>>& per_protein_scores,
    const std::map<std::string, long>& neff_of, std::vector<long> upper_bounds) {
  if (!std::is_sorted(upper_bounds.begin(), upper_bounds.end()))
    throw ContractError("neff_bucket_report: boundaries must be ascending");

  BucketReport report;
  report.upper_bounds = upper_bounds;
  report.buckets.resize(upper_bounds.size() + 1);
  for (std::size_t i = 0; i < upper_bounds.size(); ++i) {
    const long lo = i == 0 ? 1 : upper_bounds[i - 1] + 1;
    report.buckets[i].label = lo == upper_bounds[i]
                                  ? "Neff=" + std::to_string(lo)
                                  : "Neff " + std::to_string(lo) + ".." +
                                        std::to_string(upper_bounds[i]);
  }
  report.buckets.back().label =
      upper_bounds.empty() ? "all" : "Neff>" + std::to_string(upper_bounds.back());

  std::vector<double> sums(report.buckets.size(), 0.0);
  for (const auto& [id, score] : per_protein_scores) {
    const auto it = neff_of.find(id);
    if (it == neff_of.end())
      throw UserError("neff_bucket_report: no Neff for '" + id + "'");
    if (it->second < 1)
      throw ContractError("neff_bucket_report: Neff must be >= 1 for '" + id + "'");
    std::size_t bucket = upper_bounds.size();
    for (std::size_t i = 0; i < upper_bounds.size(); ++i)
      if (it->second <= upper_bounds[i]) {
        bucket = i;
        break;
      }
    report.buckets[bucket].n++;
    sums[bucket] += score;
  }
  for (std::size_t i = 0; i < report.buckets.size(); ++i)
    report.buckets[i].macro =
        report.buckets[i].n ? sums[i] / double(report.buckets[i].n) : 0.0;
  return report;
}

namespace {

// average ranks (1-based) with ties sharing the mean of their positions
std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) j++;
    const double rank = (double(i + 1) + double(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ContractError("spearman: length mismatch");
  if (x.size() < 2) throw ContractError("spearman: need at least two points");
  auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v[0]; });
  };
  if (constant(x) || constant(y))
    throw UserError("spearman: correlation undefined for constant input");

  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / double(rx.size());
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / double(ry.size());
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    cov += (rx[i] - mx) * (ry[i] - my);
    vx += (rx[i] - mx) * (rx[i] - mx);
    vy += (ry[i] - my) * (ry[i] - my);
  }
  return cov / std::sqrt(vx * vy);
}

}  // namespace plmkit
