#pragma once

#include <Eigen/Dense>

#include "replica_es/saddle.hpp"

namespace replica_es {

// Scaled coordinates of the reduced system:
//   c = delta / sqrt(q0),  b = epsilon / sqrt(q0),  sigma = sqrt(q0).
// The two special-function arguments are b + c and b. At eta = 0 the first two
// equations do not involve sigma, and sigma -> infinity is the phase boundary.
struct ScaledPoint {
  double c = 1.0;
  double b = 0.0;
  double sigma = 1.0;

  static ScaledPoint from_reduced(const ReducedPoint& x) noexcept;
  ReducedPoint to_reduced() const noexcept;
};

enum Column : int { kC = 0, kB = 1, kSigma = 2, kAlpha = 3, kR = 4, kEta = 5 };

struct ReducedEval {
  Eigen::Vector3d residual;
  /// d residual / d (c, b, sigma, alpha, r, eta).
  Eigen::Matrix<double, 3, 6> jacobian;
};

/// Residuals (identical to reduced_residuals) and the analytic Jacobian.
ReducedEval evaluate_scaled(const ScaledPoint& x, const ProblemParams& p, bool with_jacobian = true);

/// Characteristic magnitude of each equation, used for damping and step control.
Eigen::Vector3d residual_scale(const ScaledPoint& x, const ProblemParams& p) noexcept;

/// Builds a ReducedSolution (free energy, ES, observables) at a root given in scaled form.
ReducedSolution make_solution(const ProblemParams& p, const ScaledPoint& x, double residual_norm,
                              int iterations);

/// Root of the Psi-equation in b for fixed c (it does not involve sigma, r or eta).
double offset_for_width(double c, double alpha);

}  // namespace replica_es
