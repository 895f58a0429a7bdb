#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace cso {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d49bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic child-seed derivation: FNV-1a over the label, mixed with the
// root seed through two splitmix64 rounds. Distinct labels give distinct
// streams; stable across platforms.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
  if (label.empty()) throw std::invalid_argument("derive_seed: empty label");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t s = root ^ h;
  splitmix64(s);
  return splitmix64(s);
}

// mt19937_64 engine with our own variate transforms so that every draw is
// fully specified by this code, not by the standard library's
// implementation-defined distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // uniform double in [0, 1)
  double uniform() { return (engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n == 0");
    // rejection to avoid modulo bias
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // standard normal via Box-Muller, spare cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Poisson variate; Knuth inversion for small means, Hormann's PTRS
  // transformed rejection for large ones.
  long poisson(double mean) {
    if (mean < 0.0 || !std::isfinite(mean)) throw std::invalid_argument("poisson: bad mean");
    if (mean == 0.0) return 0;
    if (mean < 30.0) return poisson_knuth(mean);
    return poisson_ptrs(mean);
  }

  template <typename T>
  const T& pick(const std::vector<T>& items) {
    if (items.empty()) throw std::invalid_argument("pick: empty list");
    return items[uniform_int(items.size())];
  }

  // Fisher-Yates shuffle of 0..n-1
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  long poisson_knuth(double mean) {
    const double limit = std::exp(-mean);
    double prod = uniform();
    long k = 0;
    while (prod > limit) {
      prod *= uniform();
      ++k;
    }
    return k;
  }

  long poisson_ptrs(double mean) {
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      const double u = uniform() - 0.5;
      const double v = uniform();
      const double us = 0.5 - std::fabs(u);
      const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
      if (us >= 0.07 && v <= vr) return static_cast<long>(kf);
      if (kf < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
          kf * loglam - mean - std::lgamma(kf + 1.0)) {
        return static_cast<long>(kf);
      }
    }
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cso
