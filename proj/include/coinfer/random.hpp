#pragma once

// Counter-based random numbers: every draw is a pure function of
// (seed, counter), so results do not depend on the order or the thread in
// which they are requested.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace coinfer {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t counter_bits(std::uint64_t seed, std::uint64_t counter) {
  return splitmix64(splitmix64(seed) ^ splitmix64(counter ^ 0x6a09e667f3bcc909ULL));
}

// Uniform on [0, 1) with 53 bits of resolution.
inline constexpr double counter_uniform(std::uint64_t seed, std::uint64_t counter) {
  return static_cast<double>(counter_bits(seed, counter) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller on counters 2c and 2c+1.
inline double counter_normal(std::uint64_t seed, std::uint64_t counter) {
  const double u1 = 1.0 - counter_uniform(seed, 2 * counter);
  const double u2 = counter_uniform(seed, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Derives an independent stream seed from a parent seed and a stream id.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return counter_bits(seed ^ 0xd1b54a32d192ed03ULL, stream);
}

} // namespace coinfer
