#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

namespace slm {

// Deterministic per-path random streams. Path i of a run with base seed s gets
// an independent generator seeded from (s, i), so results do not depend on how
// paths are distributed over threads.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Xoshiro256pp {
 public:
  Xoshiro256pp() : Xoshiro256pp(0x853c49e6748fea9bULL) {}

  explicit Xoshiro256pp(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

// Stream of standard-normal pairs via Box-Muller. Each call consumes exactly
// two uniforms, which keeps the draw layout of a path independent of state.
class PathRng {
 public:
  PathRng(std::uint64_t base_seed, std::uint64_t path_index, bool zero_noise = false,
          bool antithetic = false)
      : gen_(stream_seed(base_seed, path_index)),
        zero_noise_(zero_noise),
        sign_(antithetic ? -1.0 : 1.0) {}

  // uniform in (0,1]
  double uniform() {
    return (double)((gen_.next() >> 11) + 1) * 0x1.0p-53;
  }

  std::pair<double, double> normal_pair() {
    if (zero_noise_) return {0.0, 0.0};
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    return {sign_ * r * std::cos(a), sign_ * r * std::sin(a)};
  }

  double normal() { return normal_pair().first; }

  bool zero_noise() const { return zero_noise_; }

 private:
  static std::uint64_t stream_seed(std::uint64_t base, std::uint64_t index) {
    // base XOR golden-ratio spaced index, whitened by splitmix64 inside the
    // generator constructor
    return base ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  }

  Xoshiro256pp gen_;
  bool zero_noise_;
  double sign_;
};

}  // namespace slm
