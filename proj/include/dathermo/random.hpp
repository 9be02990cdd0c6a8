#pragma once

#include "dathermo/types.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace dathermo {

using Rng = std::mt19937_64;

/// Uniform double in [0,1) built from the top 53 bits, so streams are
/// identical across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline Vecd uniform_point(Rng& rng, int d) {
  Vecd x(d);
  for (int i = 0; i < d; ++i) x(i) = uniform01(rng);
  return x;
}

/// Standard normal via Box-Muller on uniform01.
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  if (u1 <= 0) u1 = 0x1.0p-60;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Independent stream for job `index` of a run seeded with `seed`.
inline Rng stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace dathermo
