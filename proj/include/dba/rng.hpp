#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace dba {

/// Deterministic random source: std::mt19937_64 with hand-rolled uniform and
/// Box-Muller normal transforms. The standard distributions are
/// implementation-defined, so this wrapper pins the exact stream for a given
/// seed across compilers and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Uniform integer in [0, n), unbiased.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) {
        return r % n;
      }
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dba
