#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace safeeval {

/// Seeded random stream. Every draw is computed from raw 64-bit engine output
/// so sequences are identical across standard library implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  /// Samples an index from a discrete distribution given by `probs`.
  template <typename Probs> std::size_t categorical(const Probs &probs) {
    const double u = uniform();
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      last_positive = i;
      acc += probs[i];
      if (u < acc) return i;
    }
    return last_positive;
  }

  std::uint64_t next() { return engine_(); }

private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t x);

/// Derives a child seed from a parent seed and a path of stream indices.
std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path);

} // namespace safeeval
