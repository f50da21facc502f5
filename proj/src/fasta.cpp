#include "plmkit/fasta.hpp"

#include <cctype>
#include <fstream>
#include <unordered_set>

namespace plmkit {

std::vector<SequenceRecord> parse_fasta(std::istream& in) {
  std::vector<SequenceRecord> records;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  long line_no = 0;
  bool have_header = false;
  long header_line = 0;

  auto finish_record = [&] {
    if (!have_header) return;
    if (records.back().residues.empty())
      throw ParseError("empty sequence under header at line " +
                       std::to_string(header_line));
  };

  while (std::getline(in, line)) {
    line_no++;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    if (line[0] == '>') {
      finish_record();
      std::size_t id_end = 1;
      while (id_end < line.size() && !std::isspace(static_cast<unsigned char>(line[id_end])))
        id_end++;
      std::string id = line.substr(1, id_end - 1);
      if (id.empty())
        throw ParseError("missing id in header at line " + std::to_string(line_no));
      if (!seen_ids.insert(id).second)
        throw ParseError("duplicate id '" + id + "' at line " + std::to_string(line_no));
      std::size_t desc_begin = id_end;
      while (desc_begin < line.size() &&
             std::isspace(static_cast<unsigned char>(line[desc_begin])))
        desc_begin++;
      records.push_back({std::move(id), line.substr(desc_begin), ""});
      have_header = true;
      header_line = line_no;
      continue;
    }

    if (!have_header)
      throw ParseError("sequence data before any header at line " +
                       std::to_string(line_no));
    for (char ch : line) {
      if (std::isspace(static_cast<unsigned char>(ch))) continue;
      if (!std::isalpha(static_cast<unsigned char>(ch)))
        throw ParseError(std::string("invalid character '") + ch +
                         "' in sequence at line " + std::to_string(line_no));
      records.back().residues.push_back(
          char(std::toupper(static_cast<unsigned char>(ch))));
    }
  }
  finish_record();
  return records;
}

std::vector<SequenceRecord> parse_fasta_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open FASTA file: " + path);
  return parse_fasta(in);
}

void write_fasta(std::ostream& out, const std::vector<SequenceRecord>& records) {
  for (const auto& r : records) {
    out << '>' << r.id;
    if (!r.description.empty()) out << ' ' << r.description;
    out << '\n' << r.residues << '\n';
  }
}

}  // namespace plmkit
