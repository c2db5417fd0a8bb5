#pragma once

#include <cmath>
#include <cstdint>

namespace vblab {

// SplitMix64 stream with per-index substreams. Substreams make parallel and
// serial simulation of an observation sequence produce identical draws for a
// given (seed, index), and simulation of a prefix equals the prefix of a
// longer simulation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed)) {}

  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    Rng r(0);
    r.state_ = mix(mix(seed) ^ mix(index ^ 0x632be59bd9b4e019ull));
    return r;
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_pos() { return 1.0 - uniform(); }

  // Standard normal via Box-Muller; the second draw of each pair is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // Poisson draw; product-of-uniforms for small mean, halving composition
  // (sum of independent Poissons) for large mean.
  long poisson(double lambda) {
    if (!(lambda > 0.0)) return 0;
    if (lambda > 30.0) {
      const double half = 0.5 * lambda;
      return poisson(half) + poisson(lambda - half);
    }
    const double limit = std::exp(-lambda);
    double p = 1.0;
    long k = -1;
    do {
      ++k;
      p *= uniform_pos();
    } while (p > limit);
    return k;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace vblab
