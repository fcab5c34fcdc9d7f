#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace eulerflow {

// All stochastic code draws through these helpers instead of <random>
// distributions, so a seed pins the exact byte stream regardless of the
// standard library.  mt19937_64 output itself is specified by the standard.
using RandomSource = std::mt19937_64;

// Uniform in [0, 1) with 53 random mantissa bits.
inline double uniform01(RandomSource& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_angle(RandomSource& rng) {
  return uniform01(rng) * 2.0 * std::numbers::pi;
}

// Box-Muller; draws two uniforms per call.
inline double normal01(RandomSource& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

// Uniform integer in [0, n).
inline std::uint64_t uniform_index(RandomSource& rng, std::uint64_t n) {
  // Rejection-free modulo bias is ~n/2^64; irrelevant for dataset sizes,
  // but keep the rejection loop so streams are unbiased for any n.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

}  // namespace eulerflow
