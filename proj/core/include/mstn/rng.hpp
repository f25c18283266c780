#pragma once

// Deterministic random streams. All sampling goes through splitmix64-seeded
// xoshiro-free plain mixing plus explicit double construction, so identical
// seeds give identical bytes on every platform and standard library.

#include <cstdint>

namespace mstn {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Independent stream derived from a (seed, stream-id) pair.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t s = seed;
  uint64_t a = splitmix64(s);
  s ^= stream * 0xD1B54A32D192ED03ULL;
  return a ^ splitmix64(s);
}

class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0) : state_(mix_seed(seed, stream)) {}

  uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in the open interval (0,1); 53-bit resolution.
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

 private:
  uint64_t state_;
};

}  // namespace mstn
