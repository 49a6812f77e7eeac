#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace oranslice {

// splitmix64, used for seeding and for deriving per-stream seeds.
struct SplitMix64 {
  uint64_t state;

  uint64_t next() {
    uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
};

// Derives an independent sub-stream seed from a base seed and a stream index.
// This is the mixing function used everywhere a run fans out into streams
// (per-slice traffic, action selection, transfer draws, sweep runs).
inline uint64_t mix_seed(uint64_t base_seed, uint64_t stream_index) {
  SplitMix64 sm{base_seed ^ (0x9E3779B97F4A7C15ULL * (stream_index + 1))};
  return sm.next();
}

// xoshiro256++ with hand-rolled distributions. All draws are fully
// deterministic functions of the seed, independent of the standard library.
class Rng {
 public:
  Rng() { seed(0); }
  explicit Rng(uint64_t s) { seed(s); }

  void seed(uint64_t s) {
    SplitMix64 sm{s};
    for (auto& word : state_) word = sm.next();
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

  // Uniform in (0, 1].
  double uniform_open_closed() { return 1.0 - uniform(); }

  // Uniform integer in [0, n).
  int uniform_index(int n) {
    int k = static_cast<int>(uniform() * n);
    return k < n ? k : n - 1;
  }

  // Knuth's product method; fine for the means used here (<= ~100).
  int poisson(double mean) {
    const double limit = std::exp(-mean);
    double prod = 1.0;
    int k = 0;
    do {
      ++k;
      prod *= uniform();
    } while (prod > limit);
    return k - 1;
  }

  // One normal draw; always consumes exactly two uniforms (Box-Muller,
  // second value discarded) so stream alignment is draw-count stable.
  double normal(double mean, double sigma) {
    const double u1 = uniform_open_closed();
    const double u2 = uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    return mean + sigma * z;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<uint64_t, 4> state_{};
};

}  // namespace oranslice
