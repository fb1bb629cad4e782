#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace mhs {

// All stochastic behaviour in the project flows through this generator so
// that traces reproduce bit-exactly across runs and platforms. The stream
// algorithm is xoshiro256**, seeded through SplitMix64.

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  Rng() : Rng(0) {}

  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  // Independent child stream; distinct tags give distinct streams.
  static Rng derive(uint64_t seed, uint64_t tag) {
    uint64_t sm = seed;
    uint64_t a = splitmix64(sm);
    sm = a ^ (tag * 0xD1B54A32D192ED03ULL + 0x9E3779B97F4A7C15ULL);
    return Rng(splitmix64(sm));
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n); n must be >= 1. Multiply-shift bound.
  uint64_t next_below(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return next_double() < p; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Index drawn from unnormalized nonnegative weights via inverse CDF.
  size_t weighted(std::span<const double> weights) {
    double total = 0;
    for (double w : weights) total += w;
    double u = next_double() * total;
    double acc = 0;
    for (size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

  std::array<uint64_t, 4> state() const { return s_; }

 private:
  static uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<uint64_t, 4> s_{};
};

}  // namespace mhs
