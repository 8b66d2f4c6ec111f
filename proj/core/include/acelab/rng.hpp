// Deterministic random streams.
//
// std::mt19937_64 output is fully specified by the standard, but the standard
// distributions are not, so every transform here is hand-rolled to keep runs
// bit-identical across toolchains. One uniform is consumed per categorical
// draw and two per normal draw, so stream positions are stable no matter
// which code path asks for the sample.

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>

namespace acelab {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stateless seed derivation: one well-mixed word from (seed, tag).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (tag + 1));
  return splitmix64(s);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent substream addressed by a path of integers, e.g.
  /// {purpose, step, task}. Same (seed, path) always yields the same stream,
  /// regardless of what other streams were drawn in between.
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = seed;
    (void)splitmix64(s);
    for (std::uint64_t p : path) {
      s ^= splitmix64(s) + 0x9e3779b97f4a7c15ULL * (p + 1);
      (void)splitmix64(s);
    }
    return Rng(s);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Standard Box-Muller, one value per call (two uniforms consumed).
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform_pos();
    double u2 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    return mean + stddev * z;
  }

  /// CDF-inversion draw from an (already normalized) probability vector.
  /// Consumes exactly one uniform.
  int categorical(std::span<const double> probs) {
    if (probs.empty()) throw std::invalid_argument("categorical: empty distribution");
    double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  /// Uniform integer in [0, bound), rejection-free (bound is tiny here).
  int uniform_int(int bound) {
    if (bound <= 0) throw std::invalid_argument("uniform_int: bound must be positive");
    return static_cast<int>(uniform() * static_cast<double>(bound)) % bound;
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 engine_;
};

// Stream purposes used by the trainer; fixed so checkpoints are reproducible
// even if evaluation code is reordered.
namespace rng_purpose {
inline constexpr std::uint64_t kRollout = 1;
inline constexpr std::uint64_t kEval = 2;
inline constexpr std::uint64_t kEntropy = 3;
inline constexpr std::uint64_t kPretrain = 4;
}  // namespace rng_purpose

}  // namespace acelab
