#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "plmkit/metrics.hpp"

using namespace plmkit;

namespace {

LabeledSeq seq(const std::string& id, std::vector<int> labels) {
  return {id, std::move(labels)};
}

// independent oracle: plain per-label counting
double count_micro(const std::vector<LabeledSeq>& pred,
                   const std::vector<LabeledSeq>& gold) {
  std::size_t correct = 0, total = 0;
  for (std::size_t p = 0; p < gold.size(); ++p)
    for (std::size_t i = 0; i < gold[p].labels.size(); ++i) {
      total++;
      if (gold[p].labels[i] == pred[p].labels[i]) correct++;
    }
  return 100.0 * double(correct) / double(total);
}

// independent average-rank formula: rank_i = 1 + #less + (#equal - 1) / 2
std::vector<double> oracle_ranks(const std::vector<double>& v) {
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t less = 0, equal = 0;
    for (double other : v) {
      if (other < v[i]) less++;
      if (other == v[i]) equal++;
    }
    ranks[i] = 1.0 + double(less) + (double(equal) - 1.0) / 2.0;
  }
  return ranks;
}

double oracle_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = oracle_ranks(x);
  const auto ry = oracle_ranks(y);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= double(rx.size());
  my /= double(ry.size());
  double cov = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    cov += (rx[i] - mx) * (ry[i] - my);
    vx += (rx[i] - mx) * (rx[i] - mx);
    vy += (ry[i] - my) * (ry[i] - my);
  }
  return cov / std::sqrt(vx * vy);
}

}  // namespace

TEST_CASE("q_accuracy basics") {
  auto all = q_accuracy({seq("a", {0, 1, 2})}, {seq("a", {0, 1, 2})}, 3);
  CHECK(all.micro == doctest::Approx(100.0));
  CHECK(all.macro == doctest::Approx(100.0));

  // predictions HHEC vs gold HEEC with a 4-state alphabet: 3 of 4 correct
  auto one = q_accuracy({seq("p", {0, 0, 1, 2})}, {seq("p", {0, 1, 1, 2})}, 3);
  CHECK(one.micro == doctest::Approx(75.0));
  CHECK(one.per_protein.size() == 1);
  CHECK(one.per_protein[0].second == doctest::Approx(75.0));

  auto symmetric = q_accuracy(
      {seq("x", {0, 0, 0, 0}), seq("y", {1, 1, 1, 1})},
      {seq("x", {0, 0, 0, 0}), seq("y", {0, 0, 0, 0})}, 2);
  CHECK(symmetric.micro == doctest::Approx(50.0));
  CHECK(symmetric.macro == doctest::Approx(50.0));
}

TEST_CASE("q_accuracy equals brute-force counting on random fixtures") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int states = 2 + int(rng.uniform_int(9));
    std::vector<LabeledSeq> pred, gold;
    const int proteins = 1 + int(rng.uniform_int(6));
    for (int p = 0; p < proteins; ++p) {
      const std::size_t len = 1 + rng.uniform_int(30);
      LabeledSeq gp{"p" + std::to_string(p), {}};
      LabeledSeq pp = gp;
      for (std::size_t i = 0; i < len; ++i) {
        gp.labels.push_back(int(rng.uniform_int(std::uint32_t(states))));
        pp.labels.push_back(int(rng.uniform_int(std::uint32_t(states))));
      }
      gold.push_back(gp);
      pred.push_back(pp);
    }
    auto report = q_accuracy(pred, gold, states);
    CHECK(report.micro == doctest::Approx(count_micro(pred, gold)).epsilon(1e-12));
    double macro = 0;
    for (const auto& [id, score] : report.per_protein) macro += score;
    CHECK(report.macro == doctest::Approx(macro / double(report.n_proteins)));
  }
}

TEST_CASE("q_accuracy error paths") {
  CHECK_THROWS_AS(q_accuracy({}, {}, 3), UserError);
  CHECK_THROWS_WITH_AS(
      q_accuracy({seq("p", {0, 1})}, {seq("p", {0, 1, 2})}, 3),
      doctest::Contains("p"), UserError);
  CHECK_THROWS_AS(q_accuracy({seq("q", {0})}, {seq("p", {0})}, 3), UserError);
  CHECK_THROWS_AS(q_accuracy({seq("p", {5})}, {seq("p", {0})}, 3), UserError);
}

TEST_CASE("bootstrap SE of constant scores is exactly zero") {
  CHECK(bootstrap_se({70.0, 70.0, 70.0}, 500, 1) == 0.0);
  CHECK(bootstrap_se({42.5}, 100, 7) == 0.0);  // n = 1
}

TEST_CASE("bootstrap SE of {0,100} matches exhaustive enumeration") {
  // the four equally likely resamples have means {0, 50, 50, 100};
  // population SD = sqrt(1250)
  const double exact = std::sqrt(1250.0);
  const double estimate = bootstrap_se({0.0, 100.0}, 10000, 42);
  CHECK(std::abs(estimate - exact) < 1.0);
}

TEST_CASE("bootstrap SE is deterministic and permutation-stable") {
  std::vector<double> scores;
  Rng rng(3);
  for (int i = 0; i < 50; ++i) scores.push_back(60.0 + 30.0 * rng.uniform());
  CHECK(bootstrap_se(scores, 2000, 9) == bootstrap_se(scores, 2000, 9));

  auto shuffled = scores;
  std::reverse(shuffled.begin(), shuffled.end());
  double diff_sum = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s)
    diff_sum += bootstrap_se(scores, 2000, s) - bootstrap_se(shuffled, 2000, s);
  CHECK(std::abs(diff_sum / 10.0) < 0.1);
}

TEST_CASE("compare_per_protein") {
  std::vector<std::pair<std::string, double>> a = {{"x", 80}, {"y", 60}, {"z", 70}};
  auto ties = compare_per_protein(a, a);
  CHECK(ties.ties == doctest::Approx(1.0));

  std::vector<std::pair<std::string, double>> plus;
  for (auto [id, s] : a) plus.emplace_back(id, s + 1);
  CHECK(compare_per_protein(plus, a).a_wins == doctest::Approx(1.0));

  std::vector<std::pair<std::string, double>> b = {{"x", 70}, {"y", 60}, {"z", 90}};
  auto thirds = compare_per_protein(a, b);
  CHECK(thirds.a_wins == doctest::Approx(1.0 / 3));
  CHECK(thirds.b_wins == doctest::Approx(1.0 / 3));
  CHECK(thirds.ties == doctest::Approx(1.0 / 3));
  CHECK(thirds.scatter.size() == 3);

  std::vector<std::pair<std::string, double>> missing = {{"x", 1}, {"w", 2}, {"z", 3}};
  CHECK_THROWS_WITH_AS(compare_per_protein(a, missing), doctest::Contains("w"),
                       UserError);
}

TEST_CASE("neff bucket report partitions its input") {
  std::vector<std::pair<std::string, double>> scores = {
      {"a", 80}, {"b", 70}, {"c", 90}};
  std::map<std::string, long> neff = {{"a", 1}, {"b", 5}, {"c", 20}};
  auto report = neff_bucket_report(scores, neff);
  REQUIRE(report.buckets.size() == 3);
  CHECK(report.buckets[0].n == 1);
  CHECK(report.buckets[1].n == 1);
  CHECK(report.buckets[2].n == 1);
  CHECK(report.buckets[0].macro == doctest::Approx(80.0));

  std::map<std::string, long> ones = {{"a", 1}, {"b", 1}, {"c", 1}};
  auto single = neff_bucket_report(scores, ones);
  CHECK(single.buckets[0].n == 3);
  CHECK(single.buckets[1].n + single.buckets[2].n == 0);

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<std::string, double>> s;
    std::map<std::string, long> n;
    const int count = 1 + int(rng.uniform_int(40));
    for (int i = 0; i < count; ++i) {
      const std::string id = "p" + std::to_string(i);
      s.emplace_back(id, 100.0 * rng.uniform());
      n[id] = 1 + long(rng.uniform_int(40));
    }
    auto r = neff_bucket_report(s, n);
    std::size_t total = 0;
    for (const auto& bucket : r.buckets) total += bucket.n;
    CHECK(total == s.size());
  }
}

TEST_CASE("spearman fixed points") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {9, 6, 4, 1}) == doctest::Approx(-1.0));
  const double with_ties = spearman({1, 2, 2, 3}, {1, 3, 2, 4});
  CHECK(with_ties == doctest::Approx(oracle_spearman({1, 2, 2, 3}, {1, 3, 2, 4})));
}

TEST_CASE("spearman equals the brute-force rank oracle on random fixtures") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(40);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < n; ++i) {
      x.push_back(double(rng.uniform_int(10)));  // integer values force ties
      y.push_back(double(rng.uniform_int(10)));
    }
    const bool cx = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
    const bool cy = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (cx || cy) {
      CHECK_THROWS_AS(spearman(x, y), UserError);
      continue;
    }
    CHECK(spearman(x, y) == doctest::Approx(oracle_spearman(x, y)).epsilon(1e-12));
    CHECK(spearman(x, x) == doctest::Approx(1.0));
  }
}

TEST_CASE("spearman error paths") {
  CHECK_THROWS_AS(spearman({1.0}, {2.0}), ContractError);
  CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), ContractError);
  CHECK_THROWS_AS(spearman({5, 5, 5}, {1, 2, 3}), UserError);
}
