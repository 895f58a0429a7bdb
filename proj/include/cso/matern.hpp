#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cso {

struct MaternKernel {
  double nu = 10.0;           // half-integer, integer, or infinity
  double length_scale = 20.0;
  double variance = 1.0;      // sigma^2

  void validate() const {
    if (!(nu > 0.0)) throw std::invalid_argument("MaternKernel: nu <= 0");
    if (!(length_scale > 0.0)) throw std::invalid_argument("MaternKernel: length_scale <= 0");
    if (!(variance > 0.0)) throw std::invalid_argument("MaternKernel: variance <= 0");
  }
};

namespace detail {

inline bool is_integer(double x) { return std::fabs(x - std::round(x)) < 1e-9; }

// Matern with nu = p + 1/2: sigma^2 exp(-a) (p!/(2p)!) sum_i ((p+i)!/(i!(p-i)!)) (2a)^(p-i)
inline double matern_half_integer(int p, double arg) {
  double prefac = std::exp(std::lgamma(p + 1.0) - std::lgamma(2.0 * p + 1.0));
  double sum = 0.0;
  for (int i = 0; i <= p; ++i) {
    const double coef = std::exp(std::lgamma(p + i + 1.0) - std::lgamma(i + 1.0) - std::lgamma(p - i + 1.0));
    sum += coef * std::pow(2.0 * arg, p - i);
  }
  return std::exp(-arg) * prefac * sum;
}

// K_n(x) for integer n >= 0 by upward recurrence from K_0, K_1.
inline double bessel_k_int(int n, double x) {
  double km = std::cyl_bessel_k(0.0, x);
  if (n == 0) return km;
  double k = std::cyl_bessel_k(1.0, x);
  for (int m = 1; m < n; ++m) {
    const double kp = km + (2.0 * m / x) * k;
    km = k;
    k = kp;
  }
  return k;
}

}  // namespace detail

// Matern covariance at distance d. Supported smoothness values: positive
// half-integers (closed exponential-polynomial form), positive integers
// (modified-Bessel recurrence), and infinity (Gaussian limit).
inline double matern(double d, const MaternKernel& kernel) {
  if (d < 0.0) throw std::invalid_argument("matern: negative distance");
  kernel.validate();
  const double s2 = kernel.variance;
  if (std::isinf(kernel.nu)) {
    const double u = d / kernel.length_scale;
    return s2 * std::exp(-0.5 * u * u);
  }
  const double arg = std::sqrt(2.0 * kernel.nu) * d / kernel.length_scale;
  if (arg < 1e-6) return s2;  // d -> 0 limit; correction is O(arg^2)
  if (detail::is_integer(kernel.nu - 0.5)) {
    const int p = static_cast<int>(std::round(kernel.nu - 0.5));
    return s2 * detail::matern_half_integer(p, arg);
  }
  if (detail::is_integer(kernel.nu)) {
    const int n = static_cast<int>(std::round(kernel.nu));
    const double knu = detail::bessel_k_int(n, arg);
    return s2 * std::exp((1.0 - kernel.nu) * std::log(2.0) - std::lgamma(kernel.nu) +
                         kernel.nu * std::log(arg)) * knu;
  }
  throw std::invalid_argument("matern: nu must be half-integer, integer, or infinite");
}

}  // namespace cso
