#include "replica_es/saddle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "replica_es/errors.hpp"
#include "replica_es/reduced_system.hpp"
#include "replica_es/special_fn.hpp"

namespace replica_es {

namespace {

constexpr double kSqrtPi = 1.77245385090551602730;
constexpr double kQuadratureTolerance = 1e-10;

double potential_curvature(const OrderParams& op, double eta) {
  const double a = op.delta_hat + eta;
  if (!(a > 0.0)) fail(ErrorKind::NonConvexPotential, "delta_hat + eta must be positive");
  if (op.q0_hat > 0.0) fail(ErrorKind::DomainError, "q0_hat must be <= 0");
  return a;
}

// Integral over s of e^{-s^2} f(x(s)) with x(s) = epsilon/delta + s sqrt(2 q0)/delta.
// f vanishes for x >= 0, so only (-inf, s1] and [s1, s0] contribute.
template <class F>
double knot_split_integral(const OrderParams& op, F&& f) {
  using boost::math::quadrature::gauss_kronrod;
  const double scale = std::sqrt(2.0 * op.q0) / op.delta;
  const double shift = op.epsilon / op.delta;
  const double s0 = -op.epsilon / std::sqrt(2.0 * op.q0);
  const double s1 = (-op.delta - op.epsilon) / std::sqrt(2.0 * op.q0);
  auto integrand = [&](double s) { return std::exp(-s * s) * f(shift + s * scale, s); };

  double err_outer = 0.0;
  double l1_outer = 0.0;
  const double outer = gauss_kronrod<double, 31>::integrate(
      integrand, -std::numeric_limits<double>::infinity(), s1, 15, 1e-14, &err_outer, &l1_outer);
  double err_inner = 0.0;
  double l1_inner = 0.0;
  const double inner =
      gauss_kronrod<double, 31>::integrate(integrand, s1, s0, 15, 1e-14, &err_inner, &l1_inner);
  if (!std::isfinite(outer) || !std::isfinite(inner) ||
      err_outer + err_inner > kQuadratureTolerance) {
    fail(ErrorKind::QuadratureFailure, "s-integral did not reach 1e-10");
  }
  return outer + inner;
}

}  // namespace

void validate(const ProblemParams& p) {
  if (!std::isfinite(p.alpha) || !(p.alpha > 0.0 && p.alpha < 1.0)) {
    fail(ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
  }
  if (!std::isfinite(p.r) || !(p.r > 0.0)) fail(ErrorKind::InvalidArgument, "r must be positive");
  if (!std::isfinite(p.eta) || p.eta < 0.0) {
    fail(ErrorKind::InvalidArgument, "eta must be nonnegative");
  }
}

double Residuals3::max_abs() const noexcept {
  return std::max({std::abs(e1), std::abs(e2), std::abs(e3)});
}

double FullResiduals::max_abs() const noexcept {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

double wstar(double z, const OrderParams& op, double eta) {
  const double a = potential_curvature(op, eta);
  return (op.lambda + z * std::sqrt(-2.0 * op.q0_hat)) / (2.0 * a);
}

WeightMoments gaussian_averages(const OrderParams& op, double eta) {
  const double a = potential_curvature(op, eta);
  const double k = std::sqrt(-2.0 * op.q0_hat);
  WeightMoments m;
  m.mean_w = op.lambda / (2.0 * a);
  m.mean_wz = k / (2.0 * a);
  m.mean_w2 = m.mean_w * m.mean_w + (-2.0 * op.q0_hat) / (4.0 * a * a);
  return m;
}

FullResiduals full_residuals(const OrderParams& op, const ProblemParams& p) {
  validate(p);
  if (!(op.q0 > 0.0) || !(op.delta > 0.0)) {
    fail(ErrorKind::DomainError, "q0 and delta must be positive");
  }
  const WeightMoments m = gaussian_averages(op, p.eta);
  const double a = op.delta_hat + p.eta;

  const double i_gp = knot_split_integral(op, [](double x, double) { return g_prime(x); });
  const double i_sgp = knot_split_integral(op, [](double x, double s) { return s * g_prime(x); });
  const double i_g = knot_split_integral(op, [](double x, double) { return g(x); });

  FullResiduals res;
  auto& v = res.values;
  v[0] = 1.0 - m.mean_w;
  v[1] = (1.0 - p.alpha) + i_gp / (2.0 * kSqrtPi);
  v[2] = op.delta_hat - i_sgp / (2.0 * p.r * std::sqrt(2.0 * std::numbers::pi * op.q0));
  v[3] = -op.q0_hat - 2.0 * op.delta_hat * op.q0 / op.delta + i_g / (2.0 * p.r * kSqrtPi) +
         (1.0 - p.alpha) * op.epsilon / (p.r * op.delta);
  const double k = std::sqrt(-2.0 * op.q0_hat);
  v[4] = op.delta - (k > 0.0 ? m.mean_wz / k : 1.0 / (2.0 * a));
  v[5] = op.q0 - m.mean_w2;
  return res;
}

OrderParams eliminate_conjugates(double q0, double delta, double epsilon, const ProblemParams& p) {
  if (!(q0 > 0.0) || !(delta > 0.0)) fail(ErrorKind::DomainError, "q0 and delta must be positive");
  if (q0 < 1.0) fail(ErrorKind::InfeasibleLift, "q0 < 1 forces q0_hat > 0");
  OrderParams op;
  op.q0 = q0;
  op.delta = delta;
  op.epsilon = epsilon;
  op.delta_hat = 1.0 / (2.0 * delta) - p.eta;
  op.lambda = 1.0 / delta;
  op.q0_hat = -(q0 - 1.0) / (2.0 * delta * delta);
  return op;
}

Residuals3 reduced_residuals(double q0, double delta, double epsilon, const ProblemParams& p) {
  if (!(q0 > 0.0) || !(delta > 0.0)) fail(ErrorKind::DomainError, "q0 and delta must be positive");
  const ReducedEval ev =
      evaluate_scaled(ScaledPoint::from_reduced({q0, delta, epsilon}), p, false);
  return {ev.residual[0], ev.residual[1], ev.residual[2]};
}

namespace {

double free_energy_common(const OrderParams& op, const ProblemParams& p) {
  const double a = potential_curvature(op, p.eta);
  const double min_v = -(op.lambda * op.lambda - 2.0 * op.q0_hat) / (4.0 * a);
  return op.lambda + (1.0 - p.alpha) * op.epsilon / p.r - op.delta * op.q0_hat -
         op.delta_hat * op.q0 + min_v;
}

}  // namespace

double free_energy(const OrderParams& op, const ProblemParams& p) {
  validate(p);
  if (!(op.q0 > 0.0) || !(op.delta > 0.0)) {
    fail(ErrorKind::DomainError, "q0 and delta must be positive");
  }
  // (delta / (2 r sqrt(pi))) int e^{-s^2} g ds = (q0 / (r delta)) (W(-B) - W(-A)).
  const double sigma = std::sqrt(op.q0);
  const double upper = w_fn(-op.epsilon / sigma);
  const double lower = w_fn(-(op.delta + op.epsilon) / sigma);
  return free_energy_common(op, p) + op.q0 / (p.r * op.delta) * (upper - lower);
}

double free_energy_quadrature(const OrderParams& op, const ProblemParams& p) {
  validate(p);
  if (!(op.q0 > 0.0) || !(op.delta > 0.0)) {
    fail(ErrorKind::DomainError, "q0 and delta must be positive");
  }
  const double i_g = knot_split_integral(op, [](double x, double) { return g(x); });
  return free_energy_common(op, p) + op.delta / (2.0 * p.r * kSqrtPi) * i_g;
}

Observables observables(const ReducedSolution& sol) noexcept {
  return {sol.rel_error, sol.delta, sol.epsilon, sol.es_in_sample};
}

}  // namespace replica_es
