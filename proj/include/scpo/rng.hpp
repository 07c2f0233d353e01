#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace scpo {

/// Top 53 bits of the engine output mapped to [0, 1). Avoids the
/// implementation-defined behaviour of std::uniform_real_distribution so
/// seeded streams are reproducible across standard libraries.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller (two draws per sample, cosine branch).
inline double gaussian01(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
}

}  // namespace scpo
