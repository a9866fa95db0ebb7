#include "replica_es/special_fn.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "replica_es/errors.hpp"

namespace replica_es {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Below this the direct formulas for psi and w_fn cancel; the tail path is used.
constexpr double kTailSwitch = -3.0;
// psi and w_fn are reported as 0 below this.
constexpr double kZeroCutoff = -25.0;

}  // namespace

// Knots belong to the middle branch [-1, 0]; values agree there either way.
double g(double x) noexcept {
  if (x < -1.0) return -2.0 * x - 1.0;
  if (x <= 0.0) return x * x;
  return 0.0;
}

double g_prime(double x) noexcept {
  if (x < -1.0) return -2.0;
  if (x <= 0.0) return 2.0 * x;
  return 0.0;
}

double normal_pdf(double x) noexcept {
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double phi(double x) noexcept {
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return 0.5 * std::erfc(-x * kInvSqrt2);
}

double phi_upper(double x) noexcept {
  if (std::isinf(x)) return x > 0 ? 0.0 : 1.0;
  return 0.5 * std::erfc(x * kInvSqrt2);
}

namespace detail {

double upper_moment_ratio(int n, double m) noexcept {
  // 1 / (m + (n+1)/(m + (n+2)/(m + ...))), modified Lentz.
  constexpr double tiny = 1e-300;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  double f = m;
  if (f == 0.0) f = tiny;
  double c = f;
  double d = 0.0;
  for (int k = 1; k < 5000; ++k) {
    const double a = static_cast<double>(n + k);
    d = m + a * d;
    if (d == 0.0) d = tiny;
    c = m + a / c;
    if (c == 0.0) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return 1.0 / f;
}

}  // namespace detail

double psi(double x) noexcept {
  if (x < kZeroCutoff) return 0.0;
  if (x < kTailSwitch) {
    const double m = -x;
    return normal_pdf(m) * detail::upper_moment_ratio(0, m) * detail::upper_moment_ratio(1, m);
  }
  if (std::isinf(x)) return x;
  // Psi(x) = x + Psi(-x) keeps Psi(x) >= x exactly on the right.
  if (x > 0.0) return x + psi(-x);
  return x * phi(x) + normal_pdf(x);
}

double w_fn(double x) noexcept {
  if (x < kZeroCutoff) return 0.0;
  if (x < kTailSwitch) {
    const double m = -x;
    return normal_pdf(m) * detail::upper_moment_ratio(0, m) * detail::upper_moment_ratio(1, m) *
           detail::upper_moment_ratio(2, m);
  }
  if (std::isinf(x)) return x;
  if (x > 0.0) return 0.5 * (x * x + 1.0) - w_fn(-x);
  return 0.5 * (x * x + 1.0) * phi(x) + 0.5 * x * normal_pdf(x);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    fail(ErrorKind::DomainError, "normal_quantile needs p in (0,1)");
  }
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

}  // namespace replica_es
