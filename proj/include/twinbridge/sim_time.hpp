#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>

namespace twinbridge {

// Simulated time is integral microseconds since scenario start. Integral
// time keeps event ordering exact and makes the wire timestamp lossless.
using SimDuration = std::chrono::microseconds;

inline constexpr double to_seconds(SimDuration d) {
  return static_cast<double>(d.count()) * 1e-6;
}

inline SimDuration from_seconds(double s) {
  return SimDuration{static_cast<std::int64_t>(std::llround(s * 1e6))};
}

// SplitMix64 finalizer; derives independent stream seeds from one scenario seed.
inline constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace twinbridge
