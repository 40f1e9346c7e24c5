#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., SC'11), used as a
// stateless hash from (key, counter) to 128 random bits.

#include <array>
#include <cstdint>

namespace ldp::philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

namespace detail {

inline constexpr std::uint32_t kMul0 = 0xD2511F53u;
inline constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline Counter round(const Counter& c, const Key& k) {
  std::uint32_t hi0, lo0, hi1, lo1;
  mulhilo(kMul0, c[0], hi0, lo0);
  mulhilo(kMul1, c[2], hi1, lo1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace detail

inline Counter philox4x32_10(Counter ctr, Key key) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += detail::kWeyl0;
      key[1] += detail::kWeyl1;
    }
    ctr = detail::round(ctr, key);
  }
  return ctr;
}

inline Key key_of(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed),
          static_cast<std::uint32_t>(seed >> 32)};
}

/// 64 random bits addressed by (seed, a, b).
inline std::uint64_t bits64(std::uint64_t seed, std::uint64_t a,
                            std::uint64_t b = 0) {
  const Counter out = philox4x32_10(
      {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
       static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)},
      key_of(seed));
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

/// Uniform in the open interval (0, 1) with 53-bit resolution.
inline double uniform_open(std::uint64_t seed, std::uint64_t a,
                           std::uint64_t b = 0) {
  const std::uint64_t x = bits64(seed, a, b) >> 11;
  return (static_cast<double>(x) + 0.5) * 0x1.0p-53;
}

}  // namespace ldp::philox
