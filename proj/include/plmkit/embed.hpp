#pragma once

#include <string>
#include <vector>

#include "plmkit/encoder.hpp"
#include "plmkit/fasta.hpp"

namespace plmkit {

enum class Precision { Full, Half };

inline const char* precision_name(Precision p) {
  return p == Precision::Full ? "full" : "half";
}
inline Precision precision_from_name(const std::string& s) {
  if (s == "full") return Precision::Full;
  if (s == "half") return Precision::Half;
  throw ContractError("unknown precision: " + s);
}

// Per-residue embedding of one protein, rows = residues.
struct EmbeddingMatrix {
  std::string id;
  nn::Mat<float> values;
  std::string source_checkpoint;
};

enum class PoolStrategy { Mean, Min, Max, Concat };

inline const char* pool_name(PoolStrategy s) {
  switch (s) {
    case PoolStrategy::Mean: return "mean";
    case PoolStrategy::Min: return "min";
    case PoolStrategy::Max: return "max";
    case PoolStrategy::Concat: return "concat";
  }
  return "?";
}
inline PoolStrategy pool_from_name(const std::string& s) {
  if (s == "mean") return PoolStrategy::Mean;
  if (s == "min") return PoolStrategy::Min;
  if (s == "max") return PoolStrategy::Max;
  if (s == "concat") return PoolStrategy::Concat;
  throw ContractError("unknown pooling strategy: " + s);
}

struct PooledEmbedding {
  PoolStrategy strategy = PoolStrategy::Mean;
  Eigen::RowVectorXf values;  // width d, or 3d for concat (mean || min || max)
};

// Last-layer hidden states in inference mode. Half precision round-trips
// parameters and activations through binary16.
EmbeddingMatrix embed_residues(const Checkpoint& ckpt, const SequenceRecord& protein,
                               Precision precision = Precision::Full);

PooledEmbedding pool(const nn::Mat<float>& matrix, PoolStrategy strategy);

enum class BaselineKind { OneHot, Blosum62 };

// Non-LM featurizers over the 21 residue tokens: indicator rows or BLOSUM62
// substitution rows (X row all zeros).
nn::Mat<float> baseline_features(BaselineKind kind, const TokenSeq& tokens);

// ---- embedding files (PLME) ----

struct EmbeddingFile {
  Precision stored_precision = Precision::Full;
  std::uint32_t width = 0;
  std::vector<EmbeddingMatrix> records;
};

void write_embedding_file(const std::string& path, Precision stored,
                          const std::vector<EmbeddingMatrix>& records);
EmbeddingFile read_embedding_file(const std::string& path);

struct EmbedFileOptions {
  Precision precision = Precision::Full;
  std::size_t token_budget = 8192;  // batch_size * max_len <= budget
  int workers = 1;
};

struct EmbedFileReport {
  std::size_t written = 0;
  std::vector<std::string> skipped_over_length;
};

// Embed a whole FASTA file. Proteins are grouped into length buckets so a
// batch never exceeds the token budget; record order in the output file
// matches the input.
EmbedFileReport embed_file(const Checkpoint& ckpt,
                           const std::vector<SequenceRecord>& proteins,
                           const std::string& out_path,
                           const EmbedFileOptions& opts = {});

}  // namespace plmkit
