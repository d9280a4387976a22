#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace nte {

// Numerically stable inverse logit.
inline double expit(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) {
  return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

double normal_cdf(double x);

// Inverse standard normal CDF (Wichura's AS 241, double precision).
double normal_quantile(double p);

// Linear-interpolation sample quantile (R type 7). `sorted` must be ascending
// and non-empty; p in [0, 1].
double quantile_type7(std::span<const double> sorted, double p);

double mean(std::span<const double> v);
double sample_sd(std::span<const double> v);

// Deterministic RNG wrapper: explicit uniform/normal generation so results do
// not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(mix(seed)) {}

  double uniform() {  // in [0, 1)
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {  // Box-Muller, one cached value
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  std::uint64_t next_u64() { return eng_(); }

 private:
  static std::uint64_t mix(std::uint64_t z) {  // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace nte
