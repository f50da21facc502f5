#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "plmkit/common.hpp"
#include "plmkit/vocab.hpp"

namespace plmkit {

// Denoising corruption policy. Each position is selected independently with
// probability mask_prob; a selected position becomes MASK, a random residue
// token, or stays unchanged according to the split (BERT's 80/10/10 default).
struct CorruptionPolicy {
  double mask_prob = 0.15;
  double mask_frac = 0.8;
  double random_frac = 0.1;  // remainder is left unchanged

  void validate() const {
    if (mask_prob < 0.0 || mask_prob > 1.0)
      throw ContractError("mask_prob must be in [0,1]");
    if (mask_frac < 0.0 || random_frac < 0.0 || mask_frac + random_frac > 1.0)
      throw ContractError("corruption split fractions must be >= 0 and sum <= 1");
  }
};

struct CorruptionTarget {
  std::size_t position;
  TokenId original;  // never PAD or MASK
};

struct CorruptionResult {
  std::vector<TokenId> corrupted;
  std::vector<CorruptionTarget> targets;  // ascending by position
};

inline CorruptionResult corrupt(const std::vector<TokenId>& tokens,
                                const CorruptionPolicy& policy, Rng& rng) {
  policy.validate();
  CorruptionResult out;
  out.corrupted = tokens;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (rng.uniform() >= policy.mask_prob) continue;
    out.targets.push_back({i, tokens[i]});
    const double r = rng.uniform();
    if (r < policy.mask_frac) {
      out.corrupted[i] = Vocabulary::mask_id();
    } else if (r < policy.mask_frac + policy.random_frac) {
      out.corrupted[i] = TokenId(rng.uniform_int(Vocabulary::kResidueTokens));
    }  // else: keep the original token
  }
  return out;
}

// A corrupted, PAD-filled batch ready for the encoder. Targets address the
// flattened (row = b * max_len + position) layout used by batched kernels.
struct MaskedBatch {
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> inputs;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> valid;
  std::vector<std::size_t> target_rows;  // flattened positions
  std::vector<TokenId> target_ids;       // original ids at those positions
  std::vector<std::size_t> lengths;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index max_len() const { return inputs.cols(); }
};

// Build a batch from token sequences, truncating to max_len. Corruption is
// drawn per example from rng forks so the result is independent of any
// later batch partitioning.
inline MaskedBatch make_masked_batch(const std::vector<const TokenSeq*>& seqs,
                                     std::size_t max_len,
                                     const CorruptionPolicy& policy,
                                     const Rng& batch_rng,
                                     std::size_t* truncated_count = nullptr) {
  if (seqs.empty()) throw ContractError("empty batch");
  std::size_t longest = 0;
  for (const TokenSeq* s : seqs)
    longest = std::max(longest, std::min(s->ids.size(), max_len));

  MaskedBatch batch;
  batch.inputs.setConstant(Eigen::Index(seqs.size()), Eigen::Index(longest),
                           int(Vocabulary::pad_id()));
  batch.valid.setZero(Eigen::Index(seqs.size()), Eigen::Index(longest));

  for (std::size_t b = 0; b < seqs.size(); ++b) {
    std::vector<TokenId> tokens = seqs[b]->ids;
    if (tokens.size() > max_len) {
      tokens.resize(max_len);
      if (truncated_count) (*truncated_count)++;
    }
    Rng rng = batch_rng.fork(b);
    auto result = corrupt(tokens, policy, rng);
    batch.lengths.push_back(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      batch.inputs(Eigen::Index(b), Eigen::Index(i)) = int(result.corrupted[i]);
      batch.valid(Eigen::Index(b), Eigen::Index(i)) = 1;
    }
    for (const auto& t : result.targets) {
      batch.target_rows.push_back(b * longest + t.position);
      batch.target_ids.push_back(t.original);
    }
  }
  return batch;
}

}  // namespace plmkit
