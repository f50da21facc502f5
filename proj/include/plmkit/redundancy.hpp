#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "plmkit/align.hpp"
#include "plmkit/fasta.hpp"

namespace plmkit {

struct FilterAudit {
  std::string id;
  double max_pide = 0.0;  // highest PIDE observed against refs + earlier kept
};

struct FilterResult {
  std::vector<SequenceRecord> kept;
  std::vector<FilterAudit> audit;  // one entry per kept sequence
};

// Drop candidates with PIDE > threshold to any reference, then greedily
// self-reduce in input order against the already-kept set.
FilterResult filter_redundant(const std::vector<SequenceRecord>& candidates,
                              const std::vector<std::vector<SequenceRecord>>& reference_sets,
                              double threshold_pide = 20.0,
                              const AlignParams& params = {});

struct NeffResult {
  std::size_t neff = 0;
  std::map<std::string, std::size_t> cluster_of;  // sequence id -> cluster
};

// Greedy identity clustering: sequences sorted by length descending (ties by
// id) join the first cluster whose representative has PIDE >= threshold.
NeffResult neff(const std::vector<SequenceRecord>& sequences,
                double threshold_pide = 62.0, const AlignParams& params = {});

}  // namespace plmkit
