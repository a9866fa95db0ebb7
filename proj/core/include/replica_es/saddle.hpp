#pragma once

#include <array>
#include <optional>

namespace replica_es {

/// External control point: confidence level alpha, aspect ratio r = N/T, ridge amplitude eta.
struct ProblemParams {
  double alpha = 0.975;
  double r = 0.1;
  double eta = 0.0;
};

/// Throws Error{InvalidArgument} unless 0 < alpha < 1, r > 0, eta >= 0 and all finite.
void validate(const ProblemParams& p);

/// The six order parameters of the replica free energy.
struct OrderParams {
  double lambda = 0.0;     // budget multiplier
  double epsilon = 0.0;    // in-sample VaR
  double q0 = 1.0;         // second moment of the weights
  double delta = 1.0;      // susceptibility
  double q0_hat = 0.0;     // conjugate of q0, <= 0
  double delta_hat = 0.0;  // conjugate of delta
};

/// The three physical order parameters.
struct ReducedPoint {
  double q0 = 1.0;
  double delta = 1.0;
  double epsilon = 0.0;
};

/// Residuals of the reduced system, in the order: Phi-equation, Psi-equation, W-equation.
struct Residuals3 {
  double e1 = 0.0;
  double e2 = 0.0;
  double e3 = 0.0;
  double max_abs() const noexcept;
};

/// Residuals of the six stationarity conditions, in the order: budget, epsilon, delta_hat,
/// q0_hat, delta, q0. Each entry is LHS - RHS.
struct FullResiduals {
  std::array<double, 6> values{};
  double max_abs() const noexcept;
};

struct WeightMoments {
  double mean_w = 0.0;
  double mean_wz = 0.0;
  double mean_w2 = 0.0;
};

struct ReducedSolution {
  ProblemParams params;
  double q0 = 1.0;
  double delta = 1.0;
  double epsilon = 0.0;
  double residual_norm = 0.0;
  double free_energy = 0.0;
  /// r F / (1 - alpha): the optimal cost per (1 - alpha) T, ridge penalty included.
  double es_in_sample = 0.0;
  /// r (F - eta q0) / (1 - alpha): the in-sample ES of the optimal portfolio alone.
  double es_cvar_in_sample = 0.0;
  double rel_error = 0.0;
  int iterations = 0;
};

struct Observables {
  double rel_error = 0.0;
  double susceptibility = 0.0;
  double var_in = 0.0;
  double es_in = 0.0;
};

struct SolverOptions {
  double tolerance = 1e-10;  // max-abs of the reduced residuals
  int max_iterations = 100;
  double overflow_guard = 1e12;
};

/// Minimiser of V(w, z) = (delta_hat + eta) w^2 - lambda w - z w sqrt(-2 q0_hat).
double wstar(double z, const OrderParams& op, double eta);

/// Closed-form <w*>, <w* z>, <w*^2> over z ~ N(0,1).
WeightMoments gaussian_averages(const OrderParams& op, double eta);

/// Six stationarity residuals; the s-integrals are done by adaptive Gauss-Kronrod
/// quadrature split at the knots of g. Throws QuadratureFailure.
FullResiduals full_residuals(const OrderParams& op, const ProblemParams& p);

/// Rebuilds (lambda, q0_hat, delta_hat) from (q0, delta, epsilon). Throws InfeasibleLift if q0 < 1.
OrderParams eliminate_conjugates(double q0, double delta, double epsilon, const ProblemParams& p);

/// Reduced three-equation system. Throws DomainError if q0 <= 0 or delta <= 0.
Residuals3 reduced_residuals(double q0, double delta, double epsilon, const ProblemParams& p);

/// Free energy at an arbitrary point, s-integral in closed form.
double free_energy(const OrderParams& op, const ProblemParams& p);

/// Free energy with the s-integral done by quadrature.
double free_energy_quadrature(const OrderParams& op, const ProblemParams& p);

/// Root of the reduced system.
/// Throws NoConvergence, or InfeasibleRegion when eta == 0 and (alpha, r) is on or above
/// the phase boundary.
ReducedSolution solve_reduced(const ProblemParams& p, std::optional<ReducedPoint> init = std::nullopt,
                              const SolverOptions& options = {});

Observables observables(const ReducedSolution& sol) noexcept;

}  // namespace replica_es
