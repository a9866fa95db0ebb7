#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace replica_es {

struct MCConfig {
  int n_assets = 200;      // N
  int n_obs = 1000;        // T
  double alpha = 0.9;
  double eta = 0.01;
  int n_samples = 100;
  std::uint64_t seed = 1;
  double shift_xi = 1e-3;  // shift added to the standard normal returns
  int workers = 0;         // 0 selects the hardware concurrency
};

/// Throws Error{InvalidArgument} unless N >= 2, T >= 2, n_samples >= 1, shift_xi > 0,
/// 0 < alpha < 1, eta >= 0 and workers >= 0.
void validate(const MCConfig& cfg);

/// Optimum of the finite convex program for one return matrix.
struct MCInstance {
  Eigen::VectorXd weights;           // sums to N
  double eps_star = 0.0;
  Eigen::VectorXd slacks;            // u_t >= 0
  double objective = 0.0;            // full objective including the ridge term
  double cvar_objective = 0.0;       // (1 - alpha) T eps + sum u
  Eigen::VectorXd tail_multipliers;  // y_t in [0, 1], sums to (1 - alpha) T
  double budget_multiplier = 0.0;
  double duality_gap = 0.0;
  int iterations = 0;
};

struct ProgramOptions {
  double tolerance = 1e-10;
  int max_iterations = 200;
  double divergence_norm = 1e8;  // weight norm declared as an unbounded ray at eta = 0
};

/// Standard normal N x T return matrix, fixed by (seed, rep_index).
Eigen::MatrixXd sample_instance(const MCConfig& cfg, std::uint64_t rep_index);

/// Solves min (1 - alpha) T eps + sum_t u_t + eta |w|^2 subject to
/// w . x_t / sqrt(N) + eps + u_t >= 0, u_t >= 0, sum_i w_i = N, where x_t are the columns of
/// `returns`. The 1/sqrt(N) scaling gives the portfolio return unit variance at w = 1.
/// Throws Error{Unbounded} when the objective has no lower bound (eta = 0 only) and
/// Error{NoConvergence} when the interior-point iteration stalls.
MCInstance solve_program(const Eigen::MatrixXd& returns, double alpha, double eta,
                         const ProgramOptions& options = {});

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
  int count = 0;
};

struct MCSummary {
  MCConfig config;
  Estimate q0_hat;
  Estimate delta_hat;
  Estimate eps_hat;
  Estimate es_in_hat;     // cvar_objective / ((1 - alpha) T)
  Estimate es_out_ratio;  // Gaussian ES of the optimized portfolio over that of w = 1
  double feasible_fraction = 1.0;
  double shift_mismatch_fraction = 0.0;  // replications whose shifted solves changed tail sets
  double max_ratio_identity_error = 0.0;  // max |es_out_ratio - sqrt(|w|^2 / N)|
};

/// Out-of-sample ES of a portfolio under i.i.d. unit Gaussian returns (scaled by 1/sqrt(N))
/// divided by the same quantity for the equal-weight portfolio.
double gaussian_es_ratio(const Eigen::VectorXd& weights, double alpha);

struct SusceptibilitySample {
  double value = 0.0;
  int tail_changes = 0;  // scenarios whose tail membership differs between the shifted solves
  bool tail_set_changed = false;  // tail_changes exceeds kMaxTailChangeFraction of the tail
};

/// Largest fraction of the (1 - alpha) T tail scenarios that may switch membership between
/// the two shifted solves before they count as different active sets.
inline constexpr double kMaxTailChangeFraction = 0.25;

/// Finite-difference weight response of one replication. The returns of asset i are shifted
/// by +-shift_xi * s_i with Rademacher signs s_i drawn from (seed, rep_index), and the
/// response (1/N) sum_i s_i dw_i/dxi is converted to the susceptibility unit through the
/// exact identity between a return shift and a linear field (1 - alpha) T xi / sqrt(N).
SusceptibilitySample susceptibility_sample(const MCConfig& cfg, std::uint64_t rep_index,
                                           const Eigen::MatrixXd& returns);

/// Runs cfg.n_samples replications, including the susceptibility solves.
/// Unbounded replications only lower feasible_fraction; throws Error{AllUnbounded} when
/// none is bounded and Error{ShiftTooLarge} when more than half of the bounded
/// replications change tail sets between the two shifted solves.
MCSummary estimate_summary(const MCConfig& cfg);

/// Susceptibility alone, with the same error contract as estimate_summary.
Estimate estimate_susceptibility(const MCConfig& cfg);

}  // namespace replica_es
