#include "plmkit/shards.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "plmkit/common.hpp"

namespace plmkit {

namespace {
constexpr char kMagic[4] = {'P', 'L', 'M', 'S'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

std::string shard_filename(std::uint32_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "shard_%05u.plms", index);
  return buf;
}

std::vector<CorpusShard> write_shards(const std::vector<TokenSeq>& records,
                                      std::uint32_t shard_count,
                                      const std::string& dir) {
  if (shard_count < 1) throw ContractError("shard_count must be >= 1");
  std::filesystem::create_directories(dir);

  std::vector<std::vector<const TokenSeq*>> buckets(shard_count);
  for (std::size_t i = 0; i < records.size(); ++i)
    buckets[i % shard_count].push_back(&records[i]);

  std::vector<CorpusShard> shards;
  shards.reserve(shard_count);
  for (std::uint32_t s = 0; s < shard_count; ++s) {
    const std::string path = dir + "/" + shard_filename(s);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UserError("cannot write shard file: " + path);
    out.write(kMagic, 4);
    io::write_pod<std::uint16_t>(out, kVersion);
    io::write_pod<std::uint32_t>(out, std::uint32_t(buckets[s].size()));
    for (const TokenSeq* rec : buckets[s]) {
      if (rec->source_id.size() > 0xFFFF)
        throw ContractError("record id too long: " + rec->source_id);
      io::write_pod<std::uint16_t>(out, std::uint16_t(rec->source_id.size()));
      io::write_bytes(out, rec->source_id);
      io::write_pod<std::uint32_t>(out, std::uint32_t(rec->ids.size()));
      out.write(reinterpret_cast<const char*>(rec->ids.data()),
                std::streamsize(rec->ids.size()));
    }
    if (!out) throw UserError("write failed: " + path);
    shards.push_back({s, std::uint32_t(buckets[s].size()), path});
  }
  return shards;
}

std::vector<TokenSeq> read_shard(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open shard file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4))
    throw FormatError("bad magic in shard file: " + path);
  const auto version = io::read_pod<std::uint16_t>(in, path);
  if (version != kVersion)
    throw FormatError("unsupported shard version " + std::to_string(version) +
                      " in " + path);
  const auto count = io::read_pod<std::uint32_t>(in, path);
  std::vector<TokenSeq> records;
  records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    TokenSeq rec;
    const auto id_len = io::read_pod<std::uint16_t>(in, path);
    rec.source_id = io::read_bytes(in, id_len, path);
    const auto n_tokens = io::read_pod<std::uint32_t>(in, path);
    rec.ids.resize(n_tokens);
    in.read(reinterpret_cast<char*>(rec.ids.data()), std::streamsize(n_tokens));
    if (!in) throw FormatError("truncated file: " + path);
    for (TokenId t : rec.ids)
      if (t >= Vocabulary::kSize)
        throw FormatError("invalid token id in shard file: " + path);
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<TokenSeq> read_shards(const std::string& dir) {
  std::vector<TokenSeq> all;
  for (std::uint32_t s = 0;; ++s) {
    const std::string path = dir + "/" + shard_filename(s);
    if (!std::filesystem::exists(path)) {
      if (s == 0) throw UserError("no shard files found in: " + dir);
      break;
    }
    auto records = read_shard(path);
    all.insert(all.end(), std::make_move_iterator(records.begin()),
               std::make_move_iterator(records.end()));
  }
  return all;
}

}  // namespace plmkit
