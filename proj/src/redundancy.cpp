#include "plmkit/redundancy.hpp"

#include <algorithm>

namespace plmkit {

FilterResult filter_redundant(const std::vector<SequenceRecord>& candidates,
                              const std::vector<std::vector<SequenceRecord>>& reference_sets,
                              double threshold_pide, const AlignParams& params) {
  if (threshold_pide <= 0.0 || threshold_pide > 100.0)
    throw ContractError("filter_redundant: threshold must be in (0,100]");

  FilterResult result;
  for (const auto& cand : candidates) {
    double max_pide = 0.0;
    bool drop = false;
    for (const auto& refs : reference_sets) {
      for (const auto& ref : refs) {
        const double p = pairwise_identity(cand.residues, ref.residues, params).pide;
        max_pide = std::max(max_pide, p);
        if (p > threshold_pide) { drop = true; break; }
      }
      if (drop) break;
    }
    if (!drop) {
      for (const auto& kept : result.kept) {
        const double p = pairwise_identity(cand.residues, kept.residues, params).pide;
        max_pide = std::max(max_pide, p);
        if (p > threshold_pide) { drop = true; break; }
      }
    }
    if (!drop) {
      result.kept.push_back(cand);
      result.audit.push_back({cand.id, max_pide});
    }
  }
  return result;
}

NeffResult neff(const std::vector<SequenceRecord>& sequences,
                double threshold_pide, const AlignParams& params) {
  if (sequences.empty()) throw ContractError("neff: need at least one sequence");

  std::vector<const SequenceRecord*> order;
  order.reserve(sequences.size());
  for (const auto& s : sequences) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(),
                   [](const SequenceRecord* a, const SequenceRecord* b) {
                     if (a->residues.size() != b->residues.size())
                       return a->residues.size() > b->residues.size();
                     return a->id < b->id;
                   });

  NeffResult result;
  std::vector<const SequenceRecord*> representatives;
  for (const SequenceRecord* seq : order) {
    std::size_t cluster = representatives.size();
    for (std::size_t c = 0; c < representatives.size(); ++c) {
      const double p =
          pairwise_identity(seq->residues, representatives[c]->residues, params).pide;
      if (p >= threshold_pide) { cluster = c; break; }
    }
    if (cluster == representatives.size()) representatives.push_back(seq);
    result.cluster_of[seq->id] = cluster;
  }
  result.neff = representatives.size();
  return result;
}

}  // namespace plmkit
