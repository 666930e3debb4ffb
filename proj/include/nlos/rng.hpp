#pragma once

#include <cstdint>

namespace nlos {

// Counter-based deterministic generator. Every draw site derives its own
// stream by hashing a (seed, key...) tuple, so results are independent of
// evaluation order and thread scheduling.
struct Rng {
  uint64_t state;

  explicit Rng(uint64_t s) : state(s) {}

  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static Rng keyed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t s = mix(seed ^ 0x6a09e667f3bcc909ULL);
    s = mix(s ^ a);
    s = mix(s ^ b);
    s = mix(s ^ c);
    return Rng(s);
  }

  uint64_t next_u64() {
    state = mix(state);
    return state;
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [0, n).
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller.
  double next_normal();

  // Poisson draw; exact for all means (Knuth for small, PTRS for large).
  uint64_t next_poisson(double mean);
};

}  // namespace nlos
