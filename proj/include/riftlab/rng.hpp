#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include <Eigen/Dense>

namespace riftlab {

// 64-bit finalizer used by SplitMix64 (Steele, Lea, Flood 2014). Bijective on
// uint64, so distinct counters never collide.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Stream splitting rule: the generator for sub-stream i of a master seed is
// seeded with stream_seed(master, i). Nesting is allowed (rounds -> episodes)
// because the rule composes hashes rather than offsetting counters.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(master ^ mix64(index));
}

// SplitMix64: counter-based generator. State advances by a fixed increment
// and each output is a hash of the counter, so draw k from seed s is a pure
// function of (s, k) and sequences are identical across platforms.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit mantissa.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

// Standard normal via Box-Muller. Consumes exactly two draws.
inline double sample_normal(SplitMix64& rng) {
  constexpr double kTwoPi = 6.283185307179586;
  const double u1 = 1.0 - rng.next_double();  // (0, 1], keeps the log finite
  const double u2 = rng.next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

// Gamma(shape, 1) by Marsaglia-Tsang squeeze, boosted for shape < 1. Written
// out rather than using std::gamma_distribution so draws are identical across
// standard libraries.
inline double sample_gamma(SplitMix64& rng, double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("sample_gamma: shape must be positive");
  if (shape < 1.0) {
    const double u = 1.0 - rng.next_double();
    return sample_gamma(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = sample_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - rng.next_double();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

// Samples an index from a probability row by CDF inversion. Consumes exactly
// one draw. Falls back to the last positive entry if rounding pushes the
// accumulated mass below the uniform draw.
template <class Derived>
int sample_categorical(SplitMix64& rng, const Eigen::DenseBase<Derived>& probs) {
  const double u = rng.next_double();
  double acc = 0.0;
  int last_positive = -1;
  for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
    const double p = probs(i);
    if (p > 0.0) last_positive = i;
    acc += p;
    if (u < acc) return i;
  }
  if (last_positive < 0) throw std::invalid_argument("sample_categorical: all-zero probability row");
  return last_positive;
}

}  // namespace riftlab
