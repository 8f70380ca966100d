#pragma once

#include <cmath>
#include <cstdint>

namespace chartlib {

// 64-bit finalizer (murmur3 variant). Good avalanche, cheap.
inline uint64_t hash64(uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdull;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ull;
  x ^= x >> 33;
  return x;
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
  return hash64(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 12) + (a >> 4)));
}

// Small splitmix64 generator. Streams derived from (seed, stream) keys are
// statistically independent, so draws never depend on evaluation order or
// thread schedule: every parallel consumer builds its own stream key.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(hash64(seed ^ 0x6a09e667f3bcc909ull)) {}
  Rng(uint64_t seed, uint64_t stream)
      : state_(hash_combine(hash64(seed ^ 0x6a09e667f3bcc909ull), stream)) {}
  Rng(uint64_t seed, uint64_t stream, uint64_t substream)
      : Rng(hash_combine(seed, stream), substream) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is < n / 2^64, irrelevant here.
  uint64_t below(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller (cosine branch). u1 in (0, 1] keeps the
  // log finite.
  double normal() {
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1p-53;
    double u2 = static_cast<double>(next_u64() >> 11) * 0x1p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

 private:
  uint64_t state_;
};

}  // namespace chartlib
