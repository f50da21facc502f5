#include "plmkit/embed.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "plmkit/blosum62.hpp"
#include "plmkit/half.hpp"

namespace plmkit {

namespace {

constexpr char kMagic[4] = {'P', 'L', 'M', 'E'};
constexpr std::uint16_t kVersion = 1;

using IMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VMat = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// encode a group of already-tokenized proteins as one padded batch and slice
// the hidden rows back out per protein
std::vector<nn::Mat<float>> encode_group(const Checkpoint& ckpt,
                                         const std::vector<const TokenSeq*>& group,
                                         Precision precision) {
  Eigen::Index longest = 0;
  for (const auto* t : group)
    longest = std::max(longest, Eigen::Index(t->ids.size()));
  IMat inputs = IMat::Constant(Eigen::Index(group.size()), longest,
                               int(Vocabulary::pad_id()));
  VMat valid = VMat::Zero(Eigen::Index(group.size()), longest);
  for (std::size_t b = 0; b < group.size(); ++b)
    for (std::size_t t = 0; t < group[b]->ids.size(); ++t) {
      inputs(Eigen::Index(b), Eigen::Index(t)) = int(group[b]->ids[t]);
      valid(Eigen::Index(b), Eigen::Index(t)) = 1;
    }
  auto result = encode(ckpt, inputs, valid, false, precision == Precision::Half);
  std::vector<nn::Mat<float>> out;
  out.reserve(group.size());
  for (std::size_t b = 0; b < group.size(); ++b)
    out.push_back(result.hidden.middleRows(Eigen::Index(b) * longest,
                                           Eigen::Index(group[b]->ids.size())));
  return out;
}

}  // namespace

EmbeddingMatrix embed_residues(const Checkpoint& ckpt, const SequenceRecord& protein,
                               Precision precision) {
  const TokenSeq tokens = tokenize(protein);
  const TokenSeq* ptr = &tokens;
  auto rows = encode_group(ckpt, {ptr}, precision);
  EmbeddingMatrix out;
  out.id = protein.id;
  out.values = std::move(rows[0]);
  out.source_checkpoint = ckpt.meta.corpus_id;
  if (!out.values.allFinite())
    throw InternalError("embedding for '" + protein.id + "' contains non-finite values");
  return out;
}

PooledEmbedding pool(const nn::Mat<float>& matrix, PoolStrategy strategy) {
  if (matrix.rows() < 1) throw ContractError("pool: empty matrix");
  PooledEmbedding out;
  out.strategy = strategy;
  switch (strategy) {
    case PoolStrategy::Mean:
      out.values = matrix.colwise().mean();
      return out;
    case PoolStrategy::Min:
      out.values = matrix.colwise().minCoeff();
      return out;
    case PoolStrategy::Max:
      out.values = matrix.colwise().maxCoeff();
      return out;
    case PoolStrategy::Concat: {
      out.values.resize(3 * matrix.cols());
      out.values << matrix.colwise().mean(), matrix.colwise().minCoeff(),
          matrix.colwise().maxCoeff();
      return out;
    }
  }
  throw ContractError("pool: unknown strategy");
}

nn::Mat<float> baseline_features(BaselineKind kind, const TokenSeq& tokens) {
  nn::Mat<float> out =
      nn::Mat<float>::Zero(Eigen::Index(tokens.ids.size()), Vocabulary::kResidueTokens);
  for (std::size_t i = 0; i < tokens.ids.size(); ++i) {
    const TokenId t = tokens.ids[i];
    if (!Vocabulary::is_residue(t))
      throw ContractError("baseline_features: non-residue token");
    if (kind == BaselineKind::OneHot) {
      out(Eigen::Index(i), t) = 1.0f;
    } else {
      const auto row = blosum62_feature_row(t);
      for (int c = 0; c < Vocabulary::kResidueTokens; ++c)
        out(Eigen::Index(i), c) = float(row[std::size_t(c)]);
    }
  }
  return out;
}

void write_embedding_file(const std::string& path, Precision stored,
                          const std::vector<EmbeddingMatrix>& records) {
  if (records.empty()) throw ContractError("write_embedding_file: no records");
  const Eigen::Index width = records.front().values.cols();
  for (const auto& r : records)
    if (r.values.cols() != width)
      throw ContractError("write_embedding_file: records have mixed widths");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write embedding file: " + path);
  out.write(kMagic, 4);
  io::write_pod<std::uint16_t>(out, kVersion);
  io::write_pod<std::uint8_t>(out, stored == Precision::Half ? 1 : 0);
  io::write_pod<std::uint32_t>(out, std::uint32_t(width));
  for (const auto& r : records) {
    io::write_pod<std::uint16_t>(out, std::uint16_t(r.id.size()));
    io::write_bytes(out, r.id);
    io::write_pod<std::uint32_t>(out, std::uint32_t(r.values.rows()));
    if (stored == Precision::Half) {
      for (Eigen::Index i = 0; i < r.values.size(); ++i)
        io::write_pod<std::uint16_t>(out, float_to_half_bits(r.values.data()[i]));
    } else {
      out.write(reinterpret_cast<const char*>(r.values.data()),
                std::streamsize(sizeof(float)) * r.values.size());
    }
  }
  if (!out) throw UserError("write failed: " + path);
}

EmbeddingFile read_embedding_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open embedding file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4))
    throw FormatError("bad magic in embedding file: " + path);
  if (io::read_pod<std::uint16_t>(in, path) != kVersion)
    throw FormatError("unsupported embedding file version: " + path);
  const auto precision_byte = io::read_pod<std::uint8_t>(in, path);
  if (precision_byte > 1) throw FormatError("bad precision byte in " + path);

  EmbeddingFile file;
  file.stored_precision = precision_byte == 1 ? Precision::Half : Precision::Full;
  file.width = io::read_pod<std::uint32_t>(in, path);
  while (true) {
    std::uint16_t id_len;
    in.read(reinterpret_cast<char*>(&id_len), sizeof id_len);
    if (in.eof()) break;
    if (!in) throw FormatError("truncated file: " + path);
    EmbeddingMatrix rec;
    rec.id = io::read_bytes(in, id_len, path);
    const auto rows = io::read_pod<std::uint32_t>(in, path);
    rec.values.resize(rows, file.width);
    if (precision_byte == 1) {
      for (Eigen::Index i = 0; i < rec.values.size(); ++i)
        rec.values.data()[i] =
            half_bits_to_float(io::read_pod<std::uint16_t>(in, path));
    } else {
      in.read(reinterpret_cast<char*>(rec.values.data()),
              std::streamsize(sizeof(float)) * rec.values.size());
      if (!in) throw FormatError("truncated file: " + path);
    }
    file.records.push_back(std::move(rec));
  }
  return file;
}

EmbedFileReport embed_file(const Checkpoint& ckpt,
                           const std::vector<SequenceRecord>& proteins,
                           const std::string& out_path, const EmbedFileOptions& opts) {
  if (opts.token_budget < 1) throw ContractError("embed_file: token budget must be >= 1");
  EmbedFileReport report;

  std::vector<TokenSeq> tokens;
  std::vector<std::size_t> usable;  // indices into proteins/tokens
  tokens.reserve(proteins.size());
  for (std::size_t i = 0; i < proteins.size(); ++i) {
    tokens.push_back(tokenize(proteins[i]));
    const std::size_t len = tokens.back().ids.size();
    const bool over_budget = len > opts.token_budget;
    const bool over_positions =
        ckpt.config.positional == PositionalKind::LearnedAbsolute &&
        len > std::size_t(ckpt.config.max_positions);
    if (over_budget || over_positions) {
      report.skipped_over_length.push_back(proteins[i].id);
      continue;
    }
    usable.push_back(i);
  }
  if (usable.empty()) throw UserError("embed_file: no embeddable proteins");

  // length buckets: sort by length, pack batches under the token budget
  std::vector<std::size_t> by_length = usable;
  std::stable_sort(by_length.begin(), by_length.end(),
                   [&](std::size_t a, std::size_t b) {
                     return tokens[a].ids.size() < tokens[b].ids.size();
                   });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t idx : by_length) {
    // ascending order, so the incoming protein sets the batch max length
    const std::size_t len = tokens[idx].ids.size();
    if (batches.empty() || (batches.back().size() + 1) * len > opts.token_budget)
      batches.emplace_back();
    batches.back().push_back(idx);
  }

  std::vector<nn::Mat<float>> computed(proteins.size());
  std::size_t next_batch = 0;
  std::mutex mtx;
  auto drain = [&] {
    while (true) {
      std::size_t mine;
      {
        std::lock_guard<std::mutex> lock(mtx);
        if (next_batch == batches.size()) return;
        mine = next_batch++;
      }
      std::vector<const TokenSeq*> group;
      for (std::size_t idx : batches[mine]) group.push_back(&tokens[idx]);
      auto rows = encode_group(ckpt, group, opts.precision);
      for (std::size_t g = 0; g < group.size(); ++g)
        computed[batches[mine][g]] = std::move(rows[g]);
    }
  };
  if (opts.workers <= 1) {
    drain();
  } else {
    std::vector<std::thread> pool_threads;
    for (int w = 0; w < opts.workers; ++w) pool_threads.emplace_back(drain);
    for (auto& t : pool_threads) t.join();
  }

  std::vector<EmbeddingMatrix> records;
  records.reserve(usable.size());
  for (std::size_t idx : usable)
    records.push_back({proteins[idx].id, std::move(computed[idx]), ckpt.meta.corpus_id});
  write_embedding_file(out_path, opts.precision, records);
  report.written = records.size();
  return report;
}

}  // namespace plmkit
