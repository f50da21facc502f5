#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "plmkit/common.hpp"

namespace plmkit {

enum class PideDenominator { Shorter, Longer, AlignmentLength };

struct AlignParams {
  int gap_open = -11;    // score of the first residue of a gap
  int gap_extend = -1;   // score of each further gap residue
  PideDenominator denominator = PideDenominator::Shorter;
};

struct AlignmentResult {
  long score = 0;
  std::vector<std::pair<std::size_t, std::size_t>> aligned_pairs;
  std::size_t identities = 0;
  std::size_t alignment_length = 0;  // columns incl. gaps
  double pide = 0.0;                 // percentage in [0,100]
};

// Global alignment by affine-gap dynamic programming over BLOSUM62.
// PIDE = 100 * identities / denominator (shorter sequence by default).
AlignmentResult pairwise_identity(const std::string& a, const std::string& b,
                                  const AlignParams& params = {});

}  // namespace plmkit
