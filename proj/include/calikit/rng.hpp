#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace calikit {

// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Deterministic random source. The engine is std::mt19937_64, whose output
// sequence is pinned down by the standard; every variate transform is
// implemented here rather than via std::*_distribution (those are not
// specified bit-exactly), so a seed reproduces identical results on any
// platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), n > 0. Multiply-shift reduction.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  bool coin() { return (next() & 1ULL) != 0; }

  // Standard normal via the Marsaglia polar method (second variate discarded
  // to keep the stream position a pure function of the draw count).
  double normal() {
    for (;;) {
      double u = 2.0 * uniform01() - 1.0;
      double v = 2.0 * uniform01() - 1.0;
      double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  // Gamma(shape, 1) via the Marsaglia-Tsang squeeze for shape >= 1, with the
  // usual power boost for shape < 1.
  double gamma(double shape) {
    if (shape < 1.0) {
      double u = uniform01();
      if (u < 1e-300) u = 1e-300;
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      double v = t * t * t;
      double u = uniform01();
      double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v)))
        return d * v;
    }
  }

  // Categorical draw from k nonnegative weights summing to ~1. A terminal
  // fallback returns the last class so rounding can never read past the end.
  int categorical(const double* p, int k) {
    double u = uniform01();
    double cum = 0.0;
    for (int l = 0; l < k; ++l) {
      cum += p[l];
      if (u < cum) return l;
    }
    return k - 1;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace calikit
