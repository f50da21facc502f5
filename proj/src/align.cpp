#include "plmkit/align.hpp"

#include <algorithm>
#include <limits>

#include "plmkit/blosum62.hpp"
#include "plmkit/vocab.hpp"

namespace plmkit {

namespace {

constexpr long kNegInf = std::numeric_limits<long>::min() / 4;

// Predecessor codes for traceback, 2 bits per DP matrix packed in one byte.
enum Pred : std::uint8_t { kFromM = 0, kFromX = 1, kFromY = 2 };

std::vector<TokenId> encode_checked(const std::string& s, const char* which) {
  if (s.empty())
    throw ContractError(std::string("pairwise_identity: empty sequence ") + which);
  if (s.size() > 10000)
    throw ContractError(std::string("pairwise_identity: sequence ") + which +
                        " longer than 10000 residues");
  std::vector<TokenId> ids;
  ids.reserve(s.size());
  for (char c : s) {
    const TokenId t = Vocabulary::encode(c);
    if (t >= Vocabulary::kResidueTokens)
      throw ContractError("pairwise_identity: character outside the 21-letter alphabet");
    ids.push_back(t);
  }
  return ids;
}

}  // namespace

AlignmentResult pairwise_identity(const std::string& a, const std::string& b,
                                  const AlignParams& params) {
  const auto ta = encode_checked(a, "a");
  const auto tb = encode_checked(b, "b");
  const std::size_t n = ta.size(), m = tb.size();
  const long open = params.gap_open, ext = params.gap_extend;

  // Three-state Gotoh DP. M: a_i aligned to b_j; X: a_i against a gap;
  // Y: b_j against a gap. Rolling rows for scores, full byte grid for
  // traceback (2 bits of predecessor per state).
  const std::size_t w = m + 1;
  std::vector<long> mRow(w), xRow(w), yRow(w), mPrev(w), xPrev(w), yPrev(w);
  std::vector<std::uint8_t> trace((n + 1) * w, 0);

  auto pack = [](Pred pm, Pred px, Pred py) {
    return std::uint8_t(pm | (px << 2) | (py << 4));
  };

  mPrev[0] = 0;
  xPrev[0] = yPrev[0] = kNegInf;
  for (std::size_t j = 1; j <= m; ++j) {
    mPrev[j] = kNegInf;
    xPrev[j] = kNegInf;
    yPrev[j] = open + long(j - 1) * ext;
    trace[j] = pack(kFromM, kFromM, kFromY);
  }

  for (std::size_t i = 1; i <= n; ++i) {
    mRow[0] = kNegInf;
    xRow[0] = open + long(i - 1) * ext;
    yRow[0] = kNegInf;
    trace[i * w] = pack(kFromM, kFromX, kFromM);
    for (std::size_t j = 1; j <= m; ++j) {
      Pred pm = kFromM, px = kFromM, py = kFromM;

      long diag = mPrev[j - 1];
      if (xPrev[j - 1] > diag) { diag = xPrev[j - 1]; pm = kFromX; }
      if (yPrev[j - 1] > diag) { diag = yPrev[j - 1]; pm = kFromY; }
      mRow[j] = diag + blosum62_score(ta[i - 1], tb[j - 1]);

      long up = mPrev[j] + open;
      if (xPrev[j] + ext > up) { up = xPrev[j] + ext; px = kFromX; }
      if (yPrev[j] + open > up) { up = yPrev[j] + open; px = kFromY; }
      xRow[j] = up;

      long left = mRow[j - 1] + open;
      if (yRow[j - 1] + ext > left) { left = yRow[j - 1] + ext; py = kFromY; }
      if (xRow[j - 1] + open > left) { left = xRow[j - 1] + open; py = kFromX; }
      yRow[j] = left;

      trace[i * w + j] = pack(pm, px, py);
    }
    std::swap(mRow, mPrev);
    std::swap(xRow, xPrev);
    std::swap(yRow, yPrev);
  }

  AlignmentResult result;
  std::uint8_t state;  // 0=M, 1=X, 2=Y
  result.score = mPrev[m];
  state = 0;
  if (xPrev[m] > result.score) { result.score = xPrev[m]; state = 1; }
  if (yPrev[m] > result.score) { result.score = yPrev[m]; state = 2; }

  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    result.alignment_length++;
    const std::uint8_t t = trace[i * w + j];
    if (state == 0) {
      result.aligned_pairs.emplace_back(i - 1, j - 1);
      if (ta[i - 1] == tb[j - 1]) result.identities++;
      state = (t >> 0) & 3;
      i--; j--;
    } else if (state == 1) {
      state = (t >> 2) & 3;
      i--;
    } else {
      state = (t >> 4) & 3;
      j--;
    }
  }
  std::reverse(result.aligned_pairs.begin(), result.aligned_pairs.end());

  double denom;
  switch (params.denominator) {
    case PideDenominator::Shorter: denom = double(std::min(n, m)); break;
    case PideDenominator::Longer: denom = double(std::max(n, m)); break;
    case PideDenominator::AlignmentLength: denom = double(result.alignment_length); break;
    default: throw ContractError("unknown PIDE denominator");
  }
  result.pide = 100.0 * double(result.identities) / denom;
  return result;
}

}  // namespace plmkit
