#include "plmkit/blosum62.hpp"

#include "plmkit/common.hpp"

namespace plmkit {

namespace {

// Canonical NCBI residue order; remapped to vocabulary order at startup.
constexpr const char* kNcbiOrder = "ARNDCQEGHILKMFPSTWYV";

constexpr int kNcbi[20][20] = {
    /* A */ {4, -1, -2, -2, 0, -1, -1, 0, -2, -1, -1, -1, -1, -2, -1, 1, 0, -3, -2, 0},
    /* R */ {-1, 5, 0, -2, -3, 1, 0, -2, 0, -3, -2, 2, -1, -3, -2, -1, -1, -3, -2, -3},
    /* N */ {-2, 0, 6, 1, -3, 0, 0, 0, 1, -3, -3, 0, -2, -3, -2, 1, 0, -4, -2, -3},
    /* D */ {-2, -2, 1, 6, -3, 0, 2, -1, -1, -3, -4, -1, -3, -3, -1, 0, -1, -4, -3, -3},
    /* C */ {0, -3, -3, -3, 9, -3, -4, -3, -3, -1, -1, -3, -1, -2, -3, -1, -1, -2, -2, -1},
    /* Q */ {-1, 1, 0, 0, -3, 5, 2, -2, 0, -3, -2, 1, 0, -3, -1, 0, -1, -2, -1, -2},
    /* E */ {-1, 0, 0, 2, -4, 2, 5, -2, 0, -3, -3, 1, -2, -3, -1, 0, -1, -3, -2, -2},
    /* G */ {0, -2, 0, -1, -3, -2, -2, 6, -2, -4, -4, -2, -3, -3, -2, 0, -2, -2, -3, -3},
    /* H */ {-2, 0, 1, -1, -3, 0, 0, -2, 8, -3, -3, -1, -2, -1, -2, -1, -2, -2, 2, -3},
    /* I */ {-1, -3, -3, -3, -1, -3, -3, -4, -3, 4, 2, -3, 1, 0, -3, -2, -1, -3, -1, 3},
    /* L */ {-1, -2, -3, -4, -1, -2, -3, -4, -3, 2, 4, -2, 2, 0, -3, -2, -1, -2, -1, 1},
    /* K */ {-1, 2, 0, -1, -3, 1, 1, -2, -1, -3, -2, 5, -1, -3, -1, 0, -1, -3, -2, -2},
    /* M */ {-1, -1, -2, -3, -1, 0, -2, -3, -2, 1, 2, -1, 5, 0, -2, -1, -1, -1, -1, 1},
    /* F */ {-2, -3, -3, -3, -2, -3, -3, -3, -1, 0, 0, -3, 0, 6, -4, -2, -2, 1, 3, -1},
    /* P */ {-1, -2, -2, -1, -3, -1, -1, -2, -2, -3, -3, -1, -2, -4, 7, -1, -1, -4, -3, -2},
    /* S */ {1, -1, 1, 0, -1, 0, 0, 0, -1, -2, -2, 0, -1, -2, -1, 4, 1, -3, -2, -2},
    /* T */ {0, -1, 0, -1, -1, -1, -1, -2, -2, -1, -1, -1, -1, -2, -1, 1, 5, -2, -2, 0},
    /* W */ {-3, -3, -4, -4, -2, -2, -3, -2, -2, -3, -2, -3, -1, 1, -4, -3, -2, 11, 2, -3},
    /* Y */ {-2, -2, -2, -3, -2, -1, -2, -3, 2, -1, -1, -2, -1, 3, -3, -2, -2, 2, 7, -1},
    /* V */ {0, -3, -3, -3, -1, -2, -2, -3, -3, 3, 1, -2, 1, -1, -2, -2, 0, -3, -1, 4},
};

struct Table {
  int scores[20][20];
  Table() {
    int to_vocab[20];
    for (int i = 0; i < 20; ++i) to_vocab[i] = Vocabulary::encode(kNcbiOrder[i]);
    for (int i = 0; i < 20; ++i)
      for (int j = 0; j < 20; ++j)
        scores[to_vocab[i]][to_vocab[j]] = kNcbi[i][j];
  }
};

const Table& table() {
  static const Table t;
  return t;
}

}  // namespace

int blosum62_score(TokenId a, TokenId b) {
  if (a >= Vocabulary::kResidueTokens || b >= Vocabulary::kResidueTokens)
    throw ContractError("blosum62_score: token outside the 21-letter alphabet");
  if (a == Vocabulary::unknown_id() || b == Vocabulary::unknown_id()) return -1;
  return table().scores[a][b];
}

int blosum62_score_chars(char a, char b) {
  return blosum62_score(Vocabulary::encode(a), Vocabulary::encode(b));
}

std::array<int, Vocabulary::kResidueTokens> blosum62_feature_row(TokenId a) {
  std::array<int, Vocabulary::kResidueTokens> row{};
  if (a >= Vocabulary::kResidueTokens)
    throw ContractError("blosum62_feature_row: token outside the 21-letter alphabet");
  if (a == Vocabulary::unknown_id()) return row;  // X row is zeros
  for (int c = 0; c < 20; ++c) row[std::size_t(c)] = table().scores[a][c];
  row[Vocabulary::unknown_id()] = -1;
  return row;
}

}  // namespace plmkit
