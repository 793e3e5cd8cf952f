#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace wake {

/// SplitMix64 generator with Box-Muller normals.
///
/// Deliberately not std::mt19937: the artifact pipeline promises
/// byte-identical output for a given seed, and this generator is small
/// enough to mirror line for line in other languages when cross-checking.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal. Box-Muller, one spare cached between calls.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Derives a child seed from a parent seed and a stream tag. Used to give
/// every (spacing, iteration, ...) its own reproducible stream.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  SplitMix64 r(a + 0x9E3779B97F4A7C15ULL * (b + 1));
  return r.next_u64();
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b,
                              std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

/// Stable bit pattern of a double, for seeding streams keyed by a parameter.
inline std::uint64_t double_bits(double v) {
  return std::bit_cast<std::uint64_t>(v);
}

}  // namespace wake
