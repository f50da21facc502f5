#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "plmkit/vocab.hpp"

namespace plmkit {

// Shard file layout (little-endian): magic "PLMS", u16 version=1,
// u32 record count, then per record: u16 id length, id bytes,
// u32 token count, token ids as u8.

struct CorpusShard {
  std::uint32_t index = 0;
  std::uint32_t record_count = 0;
  std::string path;
};

std::string shard_filename(std::uint32_t index);

// Round-robin assignment by record index: record i goes to shard i % count.
std::vector<CorpusShard> write_shards(const std::vector<TokenSeq>& records,
                                      std::uint32_t shard_count,
                                      const std::string& dir);

std::vector<TokenSeq> read_shard(const std::string& path);

// Reads shard_00000... in index order; concatenation of their records.
std::vector<TokenSeq> read_shards(const std::string& dir);

}  // namespace plmkit
