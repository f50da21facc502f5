#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <limits>

#include "plmkit/align.hpp"
#include "plmkit/blosum62.hpp"
#include "plmkit/redundancy.hpp"

using namespace plmkit;

namespace {

// Independent oracle: enumerate every global alignment recursively, scoring
// affine gaps with the same open/extend convention as the DP.
enum class Move { None, Match, GapA, GapB };

long best_alignment_score(const std::string& a, const std::string& b,
                          std::size_t i, std::size_t j, Move last,
                          const AlignParams& p) {
  if (i == a.size() && j == b.size()) return 0;
  long best = std::numeric_limits<long>::min() / 4;
  if (i < a.size() && j < b.size()) {
    best = std::max(best, blosum62_score_chars(a[i], b[j]) +
                              best_alignment_score(a, b, i + 1, j + 1,
                                                   Move::Match, p));
  }
  if (i < a.size()) {
    const long cost = last == Move::GapA ? p.gap_extend : p.gap_open;
    best = std::max(best, cost + best_alignment_score(a, b, i + 1, j, Move::GapA, p));
  }
  if (j < b.size()) {
    const long cost = last == Move::GapB ? p.gap_extend : p.gap_open;
    best = std::max(best, cost + best_alignment_score(a, b, i, j + 1, Move::GapB, p));
  }
  return best;
}

std::string random_seq(Rng& rng, std::size_t len) {
  static const std::string alphabet = "ACDEFGHIKLMNPQRSTVWYX";
  std::string s;
  for (std::size_t i = 0; i < len; ++i)
    s.push_back(alphabet[rng.uniform_int(std::uint32_t(alphabet.size()))]);
  return s;
}

}  // namespace

TEST_CASE("blosum62 spot values and symmetry") {
  CHECK(blosum62_score_chars('A', 'A') == 4);
  CHECK(blosum62_score_chars('W', 'W') == 11);
  CHECK(blosum62_score_chars('C', 'C') == 9);
  CHECK(blosum62_score_chars('R', 'K') == 2);
  CHECK(blosum62_score_chars('I', 'V') == 3);
  CHECK(blosum62_score_chars('A', 'G') == 0);
  CHECK(blosum62_score_chars('D', 'E') == 2);
  CHECK(blosum62_score_chars('X', 'A') == -1);
  for (int i = 0; i < Vocabulary::kResidueTokens; ++i)
    for (int j = 0; j < Vocabulary::kResidueTokens; ++j)
      CHECK(blosum62_score(TokenId(i), TokenId(j)) ==
            blosum62_score(TokenId(j), TokenId(i)));
}

TEST_CASE("blosum62 feature rows") {
  auto row_a = blosum62_feature_row(Vocabulary::encode('A'));
  CHECK(row_a[Vocabulary::encode('A')] == 4);
  CHECK(row_a[Vocabulary::unknown_id()] == -1);
  auto row_w = blosum62_feature_row(Vocabulary::encode('W'));
  CHECK(row_w[Vocabulary::encode('W')] == 11);
  auto row_x = blosum62_feature_row(Vocabulary::unknown_id());
  for (int v : row_x) CHECK(v == 0);
}

TEST_CASE("pairwise identity on identical sequences") {
  auto r = pairwise_identity("ACDE", "ACDE");
  CHECK(r.pide == doctest::Approx(100.0));
  CHECK(r.identities == 4);
  CHECK(r.aligned_pairs.size() == 4);
}

TEST_CASE("pairwise identity with one substitution") {
  auto r = pairwise_identity("ACDE", "ACDF");
  CHECK(r.pide == doctest::Approx(75.0));
  // cross-check the score against the exhaustive oracle
  CHECK(r.score == best_alignment_score("ACDE", "ACDF", 0, 0, Move::None, {}));
}

TEST_CASE("pairwise identity single mismatch") {
  auto r = pairwise_identity("A", "G");
  CHECK(r.pide == doctest::Approx(0.0));
}

TEST_CASE("DP score equals brute-force enumeration for short sequences") {
  Rng rng(13);
  for (int trial = 0; trial < 120; ++trial) {
    const std::string a = random_seq(rng, 1 + rng.uniform_int(6));
    const std::string b = random_seq(rng, 1 + rng.uniform_int(6));
    const auto r = pairwise_identity(a, b);
    const long oracle = best_alignment_score(a, b, 0, 0, Move::None, {});
    CHECK_MESSAGE(r.score == oracle, "a=", a, " b=", b);
  }
}

TEST_CASE("aligned pairs strictly increasing, identities bounded") {
  Rng rng(14);
  for (int trial = 0; trial < 40; ++trial) {
    const std::string a = random_seq(rng, 1 + rng.uniform_int(30));
    const std::string b = random_seq(rng, 1 + rng.uniform_int(30));
    const auto r = pairwise_identity(a, b);
    for (std::size_t i = 1; i < r.aligned_pairs.size(); ++i) {
      CHECK(r.aligned_pairs[i].first > r.aligned_pairs[i - 1].first);
      CHECK(r.aligned_pairs[i].second > r.aligned_pairs[i - 1].second);
    }
    CHECK(r.identities <= std::min(a.size(), b.size()));
    CHECK(r.alignment_length >= std::max(a.size(), b.size()));
  }
}

TEST_CASE("PIDE symmetric under shorter and alignment-length denominators") {
  Rng rng(15);
  for (int trial = 0; trial < 40; ++trial) {
    const std::string a = random_seq(rng, 1 + rng.uniform_int(25));
    const std::string b = random_seq(rng, 1 + rng.uniform_int(25));
    for (auto denom : {PideDenominator::Shorter, PideDenominator::AlignmentLength}) {
      AlignParams p;
      p.denominator = denom;
      const auto ab = pairwise_identity(a, b, p);
      const auto ba = pairwise_identity(b, a, p);
      CHECK(ab.pide == doctest::Approx(ba.pide).epsilon(1e-9));
    }
  }
}

TEST_CASE("pairwise identity input validation") {
  CHECK_THROWS_AS(pairwise_identity("", "A"), ContractError);
  CHECK_THROWS_AS(pairwise_identity("A", ""), ContractError);
  CHECK_THROWS_AS(pairwise_identity("A2C", "A"), ContractError);
}

TEST_CASE("filter_redundant basics") {
  CHECK(filter_redundant({}, {{}}).kept.empty());

  SequenceRecord c1{"c1", "", "MKTAYIAKQR"};
  SequenceRecord c2{"c2", "", "MKTAYIAKQR"};
  auto dup = filter_redundant({c1, c2}, {});
  REQUIRE(dup.kept.size() == 1);
  CHECK(dup.kept[0].id == "c1");

  SequenceRecord ref{"r1", "", "MKTAYIAKQR"};
  auto hit = filter_redundant({c1}, {{ref}});
  CHECK(hit.kept.empty());
}

TEST_CASE("filter_redundant guarantee verified by exhaustive re-check") {
  Rng rng(33);
  std::vector<SequenceRecord> candidates, refs;
  for (int i = 0; i < 25; ++i)
    refs.push_back({"r" + std::to_string(i), "", random_seq(rng, 20 + rng.uniform_int(20))});
  for (int i = 0; i < 40; ++i) {
    if (i % 4 == 0) {
      // planted near-duplicates of a reference
      std::string s = refs[rng.uniform_int(25)].residues;
      s[rng.uniform_int(std::uint32_t(s.size()))] = 'A';
      candidates.push_back({"c" + std::to_string(i), "", s});
    } else {
      candidates.push_back({"c" + std::to_string(i), "", random_seq(rng, 20 + rng.uniform_int(20))});
    }
  }
  const double threshold = 40.0;
  auto result = filter_redundant(candidates, {refs}, threshold);
  REQUIRE(result.kept.size() == result.audit.size());
  for (std::size_t i = 0; i < result.kept.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j)
      CHECK(pairwise_identity(result.kept[i].residues, result.kept[j].residues).pide <=
            threshold);
    for (const auto& r : refs)
      CHECK(pairwise_identity(result.kept[i].residues, r.residues).pide <= threshold);
    CHECK(result.audit[i].max_pide <= threshold);
  }
}

TEST_CASE("neff basics") {
  CHECK(neff({{"a", "", "ACDEFG"}}).neff == 1);

  std::vector<SequenceRecord> five;
  for (int i = 0; i < 5; ++i)
    five.push_back({"s" + std::to_string(i), "", "MKTAYIAK"});
  CHECK(neff(five).neff == 1);

  auto r = neff({{"s0", "", "AAAAAAAA"},
                 {"s1", "", "CCCCCCCC"},
                 {"s2", "", "AAAAAAAA"}},
                62.0);
  CHECK(r.neff == 2);
  CHECK(r.cluster_of.at("s0") == r.cluster_of.at("s2"));
  CHECK(r.cluster_of.at("s0") != r.cluster_of.at("s1"));

  // exhaustive pairwise oracle: s0-s2 are 100% identical, s1 matches nothing
  CHECK(pairwise_identity("AAAAAAAA", "AAAAAAAA").pide >= 62.0);
  CHECK(pairwise_identity("AAAAAAAA", "CCCCCCCC").pide < 62.0);
}

TEST_CASE("neff invariant under duplication") {
  Rng rng(44);
  std::vector<SequenceRecord> seqs;
  for (int i = 0; i < 8; ++i)
    seqs.push_back({"s" + std::to_string(i), "", random_seq(rng, 15 + rng.uniform_int(15))});
  const auto base = neff(seqs).neff;
  for (int dup = 0; dup < 8; ++dup) {
    auto copy = seqs;
    auto duplicated = seqs[std::size_t(dup)];
    duplicated.id += "_dup";
    copy.push_back(duplicated);
    CHECK(neff(copy).neff == base);
  }
}

TEST_CASE("neff requires at least one sequence") {
  CHECK_THROWS_AS(neff({}), ContractError);
}
