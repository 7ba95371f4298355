#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace mfsde::rng {

// Counter-based generation: every variate is a pure function of
// (seed, stream, id0, id1, id2). Simulations key their noise by
// (seed, path, step, component), which makes results independent of worker
// count and lets perturbed runs reuse identical noise (common random numbers).

enum class Stream : std::uint32_t {
  increments = 0,
  mollifier = 1,
  projections = 2,
  probes = 3,
  scan = 4,
};

namespace detail {

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void philox_round(std::array<std::uint32_t, 4>& c, std::array<std::uint32_t, 2>& k) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * c[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * c[2];
  const std::array<std::uint32_t, 4> out = {
      static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0],
      static_cast<std::uint32_t>(p1),
      static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1],
      static_cast<std::uint32_t>(p0),
  };
  c = out;
  k[0] += kWeyl0;
  k[1] += kWeyl1;
}

}  // namespace detail

/// Philox4x32-10: 4 words of counter, 2 words of key, 10 rounds.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                               std::array<std::uint32_t, 2> key) {
  for (int r = 0; r < 10; ++r) detail::philox_round(counter, key);
  return counter;
}

inline std::array<std::uint32_t, 4> block(std::uint64_t seed, Stream stream, std::uint64_t id0,
                                          std::uint64_t id1, std::uint32_t id2) {
  const std::array<std::uint32_t, 4> counter = {
      static_cast<std::uint32_t>(id0),
      static_cast<std::uint32_t>(id0 >> 32),
      static_cast<std::uint32_t>(id1),
      (static_cast<std::uint32_t>(stream) << 24) | (id2 & 0xFFFFFFu),
  };
  const std::array<std::uint32_t, 2> key = {
      static_cast<std::uint32_t>(seed),
      static_cast<std::uint32_t>(seed >> 32),
  };
  return philox4x32(counter, key);
}

inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t x = (static_cast<std::uint64_t>(hi) << 32) | lo;
  // (0, 1]: 53-bit mantissa, never returns 0 so it is safe under log().
  return static_cast<double>((x >> 11) + 1) * 0x1.0p-53;
}

/// One standard normal per key (Box-Muller, cosine branch).
inline double normal(std::uint64_t seed, Stream stream, std::uint64_t id0, std::uint64_t id1,
                     std::uint32_t id2) {
  const auto w = block(seed, stream, id0, id1, id2);
  const double u1 = to_unit(w[0], w[1]);
  const double u2 = to_unit(w[2], w[3]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

/// One uniform in (0, 1] per key.
inline double uniform(std::uint64_t seed, Stream stream, std::uint64_t id0, std::uint64_t id1,
                      std::uint32_t id2) {
  const auto w = block(seed, stream, id0, id1, id2);
  return to_unit(w[0], w[1]);
}

}  // namespace mfsde::rng
