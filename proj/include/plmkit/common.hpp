#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace plmkit {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian and read/written raw");

// Error taxonomy: user errors (bad input data or flags) exit 1 from the CLI,
// anything else exits 2.
struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : UserError {
  using UserError::UserError;
};
struct FormatError : UserError {
  using UserError::UserError;
};
struct ContractError : UserError {
  using UserError::UserError;
};
struct InternalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic PRNG (xoshiro256++ seeded via splitmix64). All randomness in
// the toolkit flows through this type so that a single seed pins every output
// bit-exactly, independent of the standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& si : s_) si = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  std::uint32_t uniform_int(std::uint32_t n) {
    return std::uint32_t((next_u64() >> 32) * std::uint64_t(n) >> 32);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  // sample truncated at +-bound standard deviations
  double truncated_normal(double stddev, double bound = 2.0) {
    double z = normal();
    while (std::abs(z) > bound) z = normal();
    return z * stddev;
  }

  // Derive an independent sub-stream; used to give every (step, example)
  // pair its own deterministic stream.
  Rng fork(std::uint64_t salt) const {
    std::uint64_t x = s_[0] ^ rotl(s_[2], 29) ^ (salt * 0x9E3779B97F4A7C15ull);
    return Rng(splitmix64(x));
  }

 private:
  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---- raw little-endian stream helpers ----

namespace io {

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void write_bytes(std::ostream& os, const std::string& s) {
  os.write(s.data(), std::streamsize(s.size()));
}

template <typename T>
T read_pod(std::istream& is, const std::string& where) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("truncated file: " + where);
  return v;
}

inline std::string read_bytes(std::istream& is, std::size_t n,
                              const std::string& where) {
  std::string s(n, '\0');
  is.read(s.data(), std::streamsize(n));
  if (!is) throw FormatError("truncated file: " + where);
  return s;
}

}  // namespace io

}  // namespace plmkit
