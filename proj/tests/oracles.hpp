#pragma once

// Independent reference computations used only by tests.

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace oracle {

inline double gaussian_density(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); }

// int_{-inf}^{x} (x - t)^k / k! phi(t) dt by exp-sinh quadrature after t = x - u.
inline double lower_partial_moment(double x, int k) {
  boost::math::quadrature::exp_sinh<double> integrator;
  double fact = 1.0;
  for (int i = 2; i <= k; ++i) fact *= i;
  auto f = [&](double u) { return std::pow(u, k) / fact * gaussian_density(x - u); };
  return integrator.integrate(f, 0.0, std::numeric_limits<double>::infinity());
}

inline double normal_cdf(double x) { return lower_partial_moment(x, 0); }
inline double psi(double x) { return lower_partial_moment(x, 1); }
inline double w_fn(double x) { return lower_partial_moment(x, 2); }

// Gauss-Hermite rule for E[f(z)], z ~ N(0,1), via Golub-Welsch on the
// probabilists' Hermite recurrence.
inline std::pair<std::vector<double>, std::vector<double>> gauss_hermite(int n) {
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    jac(i, i - 1) = std::sqrt(static_cast<double>(i));
    jac(i - 1, i) = jac(i, i - 1);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  std::vector<double> nodes(n), weights(n);
  for (int i = 0; i < n; ++i) {
    nodes[i] = es.eigenvalues()[i];
    const double v = es.eigenvectors()(0, i);
    weights[i] = v * v;
  }
  return {nodes, weights};
}

}  // namespace oracle
