#pragma once

#include <array>

#include "plmkit/vocab.hpp"

namespace plmkit {

// BLOSUM62 substitution scores over the 21-letter alphabet used here
// (20 standard amino acids in vocabulary order, then X). Any pairing that
// involves X scores -1 for alignment purposes.
int blosum62_score(TokenId a, TokenId b);
int blosum62_score_chars(char a, char b);

// Row of the substitution matrix for one residue token, 21 columns in
// vocabulary order. The X row is all zeros (feature convention).
std::array<int, Vocabulary::kResidueTokens> blosum62_feature_row(TokenId a);

}  // namespace plmkit
