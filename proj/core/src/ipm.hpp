#pragma once

#include <Eigen/Dense>

#include "replica_es/mc_oracle.hpp"

namespace replica_es::detail {

// Primal-dual point of the program with portfolio returns X^T w (X is N x T, already scaled).
struct IpmPoint {
  Eigen::VectorXd w;
  double eps = 0.0;
  Eigen::VectorXd u;
  Eigen::VectorXd s;  // s = X^T w + eps + u
  Eigen::VectorXd y;  // multipliers of s >= 0
  Eigen::VectorXd v;  // multipliers of u >= 0
  double lambda = 0.0;
  int iterations = 0;
};

// Mehrotra predictor-corrector on the KKT system, reduced to an (N + 1) dense SPD solve
// plus a scalar Schur complement for the budget row.
IpmPoint solve_ipm(const Eigen::MatrixXd& x, double alpha, double eta,
                   const ProgramOptions& options);

}  // namespace replica_es::detail
