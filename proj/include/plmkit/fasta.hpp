#pragma once

#include <istream>
#include <string>
#include <vector>

#include "plmkit/common.hpp"

namespace plmkit {

// One protein: identifier, free-form description, residue string.
struct SequenceRecord {
  std::string id;
  std::string description;
  std::string residues;  // uppercase letters, length >= 1
};

// Parse FASTA text. Header lines start with '>'; the id is the first
// whitespace-delimited token, the rest is the description. Sequence lines
// are concatenated and uppercased. Errors carry 1-based line numbers.
std::vector<SequenceRecord> parse_fasta(std::istream& in);
std::vector<SequenceRecord> parse_fasta_file(const std::string& path);

void write_fasta(std::ostream& out, const std::vector<SequenceRecord>& records);

}  // namespace plmkit
