#pragma once

#include <cstdint>
#include <cmath>
#include <numbers>

namespace q2opt {

// Deterministic PRNG (xoshiro256**) with explicit distributions.
// std::uniform_real_distribution and friends are implementation-defined,
// so everything an experiment consumes is generated here to keep runs
// reproducible across compilers and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one draw per call, no caching, so the
  // stream position is a pure function of the call count.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Unbiased integer in [0, n).
  int uniform_int(int n) {
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t bound = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x = next_u64();
    while (x >= bound) x = next_u64();
    return static_cast<int>(x % un);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Independent stream derived from the constructor seed, not the current
  // position, so split order does not matter.
  Rng split(std::uint64_t stream) const {
    std::uint64_t x = seed_ ^ (0x9e3779b97f4a7c15ULL + stream * 0xbf58476d1ce4e5b9ULL);
    return Rng(splitmix64(x));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t state_[4];
};

}  // namespace q2opt
