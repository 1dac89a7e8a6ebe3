#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace viteraser {

// Mixes a base seed with stream coordinates (epoch, step, sample index ...)
// into an independent 64-bit seed. Every random draw in the library comes
// from a generator seeded this way, so sample order and masks are a pure
// function of the coordinates.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords);

// std::mt19937_64 has a portable output sequence; the standard distributions
// do not, so the mapping to reals and integers is done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform in [0, n), unbiased; n must be positive.
  std::uint64_t below(std::uint64_t n);
  // Uniform in [lo, hi] inclusive.
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }
  bool bernoulli(double p) { return uniform() < p; }
  // Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace viteraser
