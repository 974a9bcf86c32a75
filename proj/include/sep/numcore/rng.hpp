#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sep {

/// Deterministic RNG with explicitly coded distributions. std::mt19937_64
/// output is pinned by the standard, but the std distribution objects are
/// not, so uniform/normal are written out here to keep streams identical
/// across compilers and runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Box-Muller; one fresh pair of uniforms per call keeps the stream
  /// position independent of caller parity.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi_inclusive) {
    const auto span = static_cast<std::uint64_t>(hi_inclusive - lo) + 1;
    return lo + static_cast<std::int64_t>(engine_() % span);
  }

  /// Independent child stream; decouples consumers (per-utterance synthesis,
  /// per-layer init) so adding draws in one place does not shift the others.
  Rng split() {
    const std::uint64_t a = engine_();
    const std::uint64_t b = engine_();
    return Rng(a ^ (b * 0x9E3779B97F4A7C15ull));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sep
