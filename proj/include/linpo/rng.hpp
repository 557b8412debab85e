#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace linpo {

/// Deterministic keyed random generator (splitmix64 core).
///
/// Streams are derived from a (seed, id0, id1, id2) key, so independent
/// episodes, horizon steps, or worker tasks can each own a generator whose
/// output does not depend on scheduling order. All distributions are
/// implemented by hand on top of the raw 64-bit output so that results are
/// identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed + kGamma)) {}

  static Rng keyed(std::uint64_t seed, std::uint64_t id0, std::uint64_t id1 = 0,
                   std::uint64_t id2 = 0) {
    std::uint64_t s = mix(seed + kGamma);
    s = mix(s + id0 * 0x9E3779B97F4A7C15ULL + 1);
    s = mix(s + id1 * 0xBF58476D1CE4E5B9ULL + 2);
    s = mix(s + id2 * 0x94D049BB133111EBULL + 3);
    Rng r(0);
    r.state_ = s;
    return r;
  }

  std::uint64_t next_u64() {
    state_ += kGamma;
    return mix(state_);
  }

  /// Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform integer in [0, n). Requires n >= 1.
  int next_int(int n) {
    return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                             static_cast<unsigned __int128>(n)) >>
                            64);
  }

  /// Standard normal via Box-Muller (two uniforms per draw, no caching).
  double gaussian() {
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  /// Exp(1) sample.
  double exponential() { return -std::log(1.0 - next_double()); }

  /// Index drawn from an unnormalized nonnegative weight vector.
  int categorical(const double* w, int n) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += w[i];
    double u = next_double() * total;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += w[i];
      if (u < acc) return i;
    }
    return n - 1;  // round-off fallthrough
  }

  /// Flat Dirichlet sample (uniform on the simplex).
  std::vector<double> dirichlet(int n) {
    std::vector<double> p(static_cast<std::size_t>(n));
    double total = 0.0;
    for (auto& x : p) {
      x = exponential();
      total += x;
    }
    for (auto& x : p) x /= total;
    return p;
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

// Stream ids used to key sub-generators; keeps call sites grep-able.
namespace rng_stream {
constexpr std::uint64_t kRollout = 1;
constexpr std::uint64_t kWarmup = 2;
constexpr std::uint64_t kNoise = 3;
constexpr std::uint64_t kInstance = 4;
constexpr std::uint64_t kProbe = 5;
}  // namespace rng_stream

}  // namespace linpo
