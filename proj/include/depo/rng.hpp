#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace depo {

// Named sub-streams derived from one master seed. Arms that should be
// pairable (depo vs baselines) must draw from the same streams in the same
// order, so each random purpose gets its own stream.
enum class Stream : std::uint64_t {
  kFeatures = 1,
  kTheta = 2,
  kProjection = 3,
  kPrompt = 4,
  kPolicySample = 5,
  kSamplerSample = 6,
  kOracle = 7,
  kProbe = 8,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 make_stream(std::uint64_t seed, Stream stream) {
  const std::uint64_t mixed =
      splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream)));
  return std::mt19937_64(mixed);
}

// Uniform in [0, 1) with 53 random bits. Hand-rolled so traces are
// reproducible across standard library implementations.
inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Box-Muller, one variate per call (two uniforms consumed).
inline double standard_normal(std::mt19937_64& g) {
  double u1 = uniform01(g);
  const double u2 = uniform01(g);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double radius = std::sqrt(-2.0 * std::log(u1));
  return radius * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Draws an index from an explicit probability vector (entries sum to 1).
inline int sample_categorical(const Eigen::VectorXd& probs, std::mt19937_64& g) {
  const double u = uniform01(g);
  double acc = 0.0;
  const int n = static_cast<int>(probs.size());
  for (int i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return n - 1;
}

}  // namespace depo
