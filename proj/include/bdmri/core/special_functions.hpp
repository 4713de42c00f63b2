#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "bdmri/core/errors.hpp"

namespace bdmri::special {

namespace detail {

// Continued fraction for the incomplete beta function, modified Lentz.
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  constexpr int kMaxIter = 200000;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericalError("incomplete beta: continued fraction did not converge");
}

// lgamma(x + a) - lgamma(x) for x large, without the cancellation of two
// huge lgamma values (Stirling series).
inline double log_gamma_ratio_large(double x, double a) {
  auto series = [](double z) {
    const double z2 = z * z;
    return 1.0 / (12.0 * z) - 1.0 / (360.0 * z * z2) + 1.0 / (1260.0 * z * z2 * z2) -
           1.0 / (1680.0 * z * z2 * z2 * z2);
  };
  return (x - 0.5) * std::log1p(a / x) + a * std::log(x + a) - a + series(x + a) - series(x);
}

// log B(a, b)^-1 = lgamma(a + b) - lgamma(a) - lgamma(b).
inline double log_inverse_beta(double a, double b) {
  const double big = std::max(a, b);
  const double small = std::min(a, b);
  if (big > 20.0) return log_gamma_ratio_large(big, small) - std::lgamma(small);
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw DataError("incomplete_beta: shape parameters must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw DataError("incomplete_beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = detail::log_inverse_beta(a, b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// CDF of the standard Student t with `dof` degrees of freedom.
inline double student_t_cdf(double t, double dof) {
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double t2 = t * t;
  if (t2 < dof) {
    // Central region: avoids cancellation in 1 - I.
    const double half = 0.5 * incomplete_beta(0.5, 0.5 * dof, t2 / (dof + t2));
    return t >= 0 ? 0.5 + half : 0.5 - half;
  }
  const double tail = 0.5 * incomplete_beta(0.5 * dof, 0.5, dof / (dof + t2));
  return t > 0 ? 1.0 - tail : tail;
}

inline double student_t_pdf(double t, double dof) {
  const double log_norm = (dof > 40.0 ? detail::log_gamma_ratio_large(0.5 * dof, 0.5)
                                       : std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof)) -
                          0.5 * std::log(dof * std::numbers::pi);
  return std::exp(log_norm - 0.5 * (dof + 1.0) * std::log1p(t * t / dof));
}

/// Quantile of the standard Student t: Newton steps safeguarded by a
/// bisection bracket.
inline double student_t_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0)) throw DataError("t quantile: p must lie in (0, 1)");
  if (!(dof > 0.0)) throw DataError("t quantile: dof must be positive");
  if (p == 0.5) return 0.0;
  if (p < 0.5) return -student_t_quantile(1.0 - p, dof);

  double lo = 0.0;
  double hi = 1.0;
  while (student_t_cdf(hi, dof) < p) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) return hi;
  }
  double x = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double f = student_t_cdf(x, dof) - p;
    if (f == 0.0) return x;
    if (f < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double slope = student_t_pdf(x, dof);
    double next = slope > 0.0 ? x - f / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(next)) return next;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) return next;
    x = next;
  }
  return x;
}

}  // namespace bdmri::special
