#pragma once

#include <cstdint>
#include <random>

namespace dcnp {

// Deterministic pseudo-random source. All distributions are implemented on
// top of the raw 64-bit stream so that a fixed seed gives bit-identical
// results regardless of standard-library internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Derives an independent child generator. Stable in the construction seed,
  // not in the number of values already drawn.
  Rng fork(std::uint64_t stream) const;

  std::uint64_t bits() { return gen_(); }

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t integer(std::uint64_t n);

  // Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Gamma(shape, scale) via Marsaglia-Tsang, with the u^(1/a) boost for
  // shape < 1.
  double gamma(double shape, double scale);

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace dcnp
