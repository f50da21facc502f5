#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <string>
#include <vector>

#include "plmkit/common.hpp"
#include "plmkit/fasta.hpp"

namespace plmkit {

using TokenId = std::uint8_t;

// Fixed 23-token vocabulary: the 20 standard amino acids, X for anything
// else, and the two specials used only by batching/pre-training.
class Vocabulary {
 public:
  static constexpr int kResidueTokens = 21;  // 20 amino acids + X
  static constexpr int kSize = 23;

  static constexpr const char* tokens() { return "ACDEFGHIKLMNPQRSTVWY"; }

  static constexpr TokenId unknown_id() { return 20; }  // X
  static constexpr TokenId pad_id() { return 21; }
  static constexpr TokenId mask_id() { return 22; }

  // Residue character -> token id. Letters outside the 20 standard amino
  // acids (B, O, U, Z, J, ...) collapse to X.
  static TokenId encode(char c) {
    const char u = char(std::toupper(static_cast<unsigned char>(c)));
    if (!std::isalpha(static_cast<unsigned char>(u)))
      throw ContractError(std::string("non-alphabetic residue character '") + c + "'");
    const char* p = tokens();
    for (int i = 0; i < 20; ++i)
      if (p[i] == u) return TokenId(i);
    return unknown_id();
  }

  static char decode(TokenId id) {
    if (id < 20) return tokens()[id];
    if (id == unknown_id()) return 'X';
    if (id == pad_id()) return '_';
    return '?';  // MASK has no residue letter
  }

  static bool is_residue(TokenId id) { return id < kResidueTokens; }
};

// Token ids for one protein, paired with its source id.
struct TokenSeq {
  std::string source_id;
  std::vector<TokenId> ids;
};

// One token per residue; length-preserving. Non-alphabetic characters are
// errors with their 0-based offset.
inline TokenSeq tokenize(const SequenceRecord& record) {
  if (record.residues.empty())
    throw ContractError("cannot tokenize empty sequence '" + record.id + "'");
  TokenSeq out;
  out.source_id = record.id;
  out.ids.reserve(record.residues.size());
  for (std::size_t i = 0; i < record.residues.size(); ++i) {
    const char c = record.residues[i];
    if (!std::isalpha(static_cast<unsigned char>(c)))
      throw ParseError("non-alphabetic character '" + std::string(1, c) +
                       "' at offset " + std::to_string(i) + " in '" +
                       record.id + "'");
    out.ids.push_back(Vocabulary::encode(c));
  }
  return out;
}

}  // namespace plmkit
