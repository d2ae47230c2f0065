#pragma once

#include <cstdint>
#include <random>

namespace dense {

// Single generator type used across the project; all randomness is seeded.
using Rng = std::mt19937_64;

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

}  // namespace dense
