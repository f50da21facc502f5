#pragma once

#include <bit>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace plmkit {

// IEEE 754 binary16 emulation. Conversions use round-to-nearest-even;
// magnitudes above 65504 overflow to +-infinity.

inline std::uint16_t float_to_half_bits(float f) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(f);
  const std::uint32_t sign = (x >> 16) & 0x8000u;
  const std::uint32_t exp = (x >> 23) & 0xFFu;
  const std::uint32_t mant = x & 0x7FFFFFu;

  if (exp == 0xFF)  // inf or nan
    return std::uint16_t(sign | 0x7C00u | (mant ? 0x200u : 0));

  const int unbiased = int(exp) - 127;
  if (unbiased > 15) return std::uint16_t(sign | 0x7C00u);  // overflow -> inf

  if (unbiased >= -14) {
    // normal half; round 23-bit mantissa to 10 bits, ties to even
    std::uint32_t half = (std::uint32_t(unbiased + 15) << 10) | (mant >> 13);
    const std::uint32_t rest = mant & 0x1FFFu;
    if (rest > 0x1000u || (rest == 0x1000u && (half & 1u)))
      half++;  // may carry into the exponent, which is the correct rounding
    return std::uint16_t(sign | half);
  }

  if (unbiased < -25) return std::uint16_t(sign);  // underflow to zero

  // subnormal half
  std::uint32_t full = mant | 0x800000u;
  const int shift = -unbiased - 14 + 13;
  std::uint32_t half = full >> (shift + 1);
  const std::uint32_t rest = full & ((1u << (shift + 1)) - 1u);
  const std::uint32_t halfway = 1u << shift;
  if (rest > halfway || (rest == halfway && (half & 1u))) half++;
  return std::uint16_t(sign | half);
}

inline float half_bits_to_float(std::uint16_t h) {
  const std::uint32_t sign = std::uint32_t(h & 0x8000u) << 16;
  const std::uint32_t exp = (h >> 10) & 0x1Fu;
  std::uint32_t mant = h & 0x3FFu;

  if (exp == 0x1F)
    return std::bit_cast<float>(sign | 0x7F800000u | (mant << 13));
  if (exp == 0) {
    // subnormal: mant * 2^-24, exactly representable as a normal float
    const float v = float(mant) * 0x1.0p-24f;
    return sign ? -v : v;
  }
  return std::bit_cast<float>(sign | ((exp - 15 + 127) << 23) | (mant << 13));
}

inline float half_roundtrip(float f) {
  return half_bits_to_float(float_to_half_bits(f));
}

struct HalfRoundtripReport {
  std::vector<Eigen::Index> overflow_indices;  // flat row-major indices
  bool clean() const { return overflow_indices.empty(); }
};

// Round every value to the nearest binary16 and widen back; overflows become
// +-infinity and are reported to the caller, which decides whether to abort.
template <typename Derived>
HalfRoundtripReport half_roundtrip_inplace(Eigen::MatrixBase<Derived>& m) {
  HalfRoundtripReport report;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float rounded = half_roundtrip(float(m(r, c)));
      if (std::isinf(rounded) && std::isfinite(float(m(r, c))))
        report.overflow_indices.push_back(r * m.cols() + c);
      m(r, c) = typename Derived::Scalar(rounded);
    }
  return report;
}

}  // namespace plmkit
