#pragma once

#include <cmath>
#include <cstdint>

namespace rsq {

/// splitmix64 stream. Used instead of <random> so that seeded results are
/// bit-exact across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 bits of mantissa.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_unit();
  }

  /// Box-Muller draw; consumes exactly two uniforms, keeps no spare, so the
  /// stream position never depends on call history.
  double next_gaussian(double mean = 0.0, double stddev = 1.0) {
    double u1;
    do {
      u1 = next_unit();
    } while (u1 <= 0.0);
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    return mean + stddev * r * std::cos(two_pi * u2);
  }

  /// Uniform integer in [0, n) via multiply-shift.
  uint32_t next_below(uint32_t n) {
    const uint64_t x = next_u64() >> 32;
    return static_cast<uint32_t>((x * n) >> 32);
  }

 private:
  uint64_t state_;
};

/// Derives an independent stream for (seed, stream) pairs.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  Rng r(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
  return r.next_u64();
}

}  // namespace rsq
