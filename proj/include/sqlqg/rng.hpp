#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace sqlqg {

// Deterministic random stream: xoshiro256++ seeded through splitmix64.
// The algorithm is fixed here (not delegated to <random> distributions) so
// that every draw is bit-reproducible across platforms and standard library
// versions. Streams are splittable: split() derives an independent child
// stream from the parent state.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) { reseed(seed); }

  void reseed(uint64_t seed);

  uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double uniform();

  // Uniform in [lo, hi).
  double uniform(double lo, double hi);

  // Uniform integer in [lo, hi], inclusive, unbiased via rejection.
  int64_t uniform_int(int64_t lo, int64_t hi);

  // Uniform index in [0, n). n must be > 0.
  size_t pick_index(size_t n);

  // Standard normal via Box-Muller (two uniforms per draw).
  double normal();

  // Derive an independent child stream; advances this stream by one draw.
  Rng split();

  static uint64_t mix(uint64_t a, uint64_t b);

 private:
  std::array<uint64_t, 4> state_{};
};

}  // namespace sqlqg
