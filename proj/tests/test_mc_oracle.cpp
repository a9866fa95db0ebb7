#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "replica_es/errors.hpp"
#include "replica_es/mc_oracle.hpp"

namespace rs = replica_es;

namespace {

// (1 - alpha) T eps + sum_t max(0, -w.x_t - eps) minimized over eps, plus the ridge term;
// the inner minimum is attained at one of the scenario losses.
double exact_objective(const Eigen::MatrixXd& returns, const Eigen::VectorXd& w, double alpha,
                       double eta) {
  const double n = static_cast<double>(returns.rows());
  const Eigen::VectorXd loss = -(returns.transpose() * w) / std::sqrt(n);
  const double k = (1.0 - alpha) * static_cast<double>(returns.cols());
  double best = INFINITY;
  for (Eigen::Index c = 0; c < loss.size(); ++c) {
    const double eps = loss(c);
    best = std::min(best, k * eps + (loss.array() - eps).max(0.0).sum());
  }
  return best + eta * w.squaredNorm();
}

// Enumerates every assignment of scenarios to {strict tail, kink, outside}, solves the
// equality-constrained stationarity system of each piece, and keeps the best objective.
double active_set_oracle(const Eigen::MatrixXd& returns, double alpha, double eta) {
  const int n = static_cast<int>(returns.rows());
  const int t = static_cast<int>(returns.cols());
  const Eigen::MatrixXd x = returns / std::sqrt(static_cast<double>(n));
  int pieces = 1;
  for (int i = 0; i < t; ++i) pieces *= 3;
  double best = INFINITY;
  for (int code = 0; code < pieces; ++code) {
    std::vector<int> tail, kink;
    for (int i = 0, c = code; i < t; ++i, c /= 3) {
      if (c % 3 == 1) tail.push_back(i);
      if (c % 3 == 2) kink.push_back(i);
    }
    const int m = static_cast<int>(kink.size()) + 1;
    const int dim = n + 1 + m;
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    kkt.topLeftCorner(n, n).diagonal().setConstant(2.0 * eta);
    for (int i : tail) rhs.head(n) += x.col(i);
    rhs(n) = static_cast<double>(tail.size()) - (1.0 - alpha) * t;
    for (int j = 0; j < m - 1; ++j) {
      kkt.block(n + 1 + j, 0, 1, n) = x.col(kink[j]).transpose();
      kkt(n + 1 + j, n) = 1.0;
    }
    kkt.block(n + m, 0, 1, n).setOnes();
    rhs(n + m) = n;
    kkt.topRightCorner(n + 1, m) = kkt.bottomLeftCorner(m, n + 1).transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd z = lu.solve(rhs);
    best = std::min(best, exact_objective(returns, z.head(n), alpha, eta));
  }
  return best;
}

rs::MCConfig small_config() {
  rs::MCConfig cfg;
  cfg.n_assets = 20;
  cfg.n_obs = 100;
  cfg.alpha = 0.9;
  cfg.eta = 0.05;
  cfg.n_samples = 6;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST(mc_oracle, sample_deterministic) {
  const auto cfg = small_config();
  EXPECT_EQ(rs::sample_instance(cfg, 3), rs::sample_instance(cfg, 3));
  EXPECT_NE(rs::sample_instance(cfg, 3), rs::sample_instance(cfg, 4));
  auto other = cfg;
  other.seed = 8;
  EXPECT_NE(rs::sample_instance(cfg, 3), rs::sample_instance(other, 3));
}

TEST(mc_oracle, sample_moments) {
  auto cfg = small_config();
  cfg.n_assets = 100;
  cfg.n_obs = 1000;
  const Eigen::MatrixXd x = rs::sample_instance(cfg, 0);
  const double count = static_cast<double>(x.size());
  const double mean = x.mean();
  const double var = (x.array() - mean).square().sum() / (count - 1.0);
  EXPECT_LE(std::abs(mean), 4.0 / std::sqrt(count));
  EXPECT_LE(std::abs(var - 1.0), 4.0 * std::sqrt(2.0 / count));
}

TEST(mc_oracle, single_asset_matches_scenario_enumeration) {
  auto cfg = small_config();
  cfg.n_assets = 2;
  cfg.n_obs = 40;
  const Eigen::MatrixXd x = rs::sample_instance(cfg, 0).topRows(1);
  for (double eta : {0.0, 0.3}) {
    const auto inst = rs::solve_program(x, 0.9, eta);
    EXPECT_NEAR(inst.weights(0), 1.0, 1e-12);
    EXPECT_NEAR(inst.objective, exact_objective(x, inst.weights, 0.9, eta), 1e-8);
  }
}

TEST(mc_oracle, large_ridge_pulls_to_equal_weights) {
  auto cfg = small_config();
  const auto inst = rs::solve_program(rs::sample_instance(cfg, 1), cfg.alpha, 1e3);
  EXPECT_LE((inst.weights.array() - 1.0).abs().maxCoeff(), 1e-2);
}

TEST(mc_oracle, small_instance_matches_active_set_oracle) {
  auto cfg = small_config();
  cfg.n_assets = 3;
  cfg.n_obs = 8;
  for (std::uint64_t rep = 0; rep < 4; ++rep) {
    const Eigen::MatrixXd x = rs::sample_instance(cfg, rep);
    for (double alpha : {0.75, 0.8}) {
      for (double eta : {0.02, 0.5}) {
        const auto inst = rs::solve_program(x, alpha, eta);
        EXPECT_NEAR(inst.objective, active_set_oracle(x, alpha, eta), 1e-6)
            << rep << " " << alpha << " " << eta;
      }
    }
  }
}

TEST(mc_oracle, feasibility_and_complementarity) {
  auto cfg = small_config();
  cfg.n_assets = 50;
  cfg.n_obs = 200;
  for (double eta : {0.0, 0.01, 0.2}) {
    const Eigen::MatrixXd x = rs::sample_instance(cfg, 2);
    const auto inst = rs::solve_program(x, cfg.alpha, eta);
    const double n = cfg.n_assets;
    const Eigen::VectorXd s =
        (x.transpose() * inst.weights).array() / std::sqrt(n) + inst.eps_star + inst.slacks.array();
    EXPECT_GE(s.minCoeff(), -1e-8);
    EXPECT_GE(inst.slacks.minCoeff(), 0.0);
    EXPECT_LE(std::abs(inst.weights.sum() - n), 1e-10 * n);
    EXPECT_LE(std::abs(inst.duality_gap), 1e-8 * (1.0 + std::abs(inst.objective)));
    const Eigen::VectorXd y = inst.tail_multipliers;
    EXPECT_NEAR(y.sum(), (1.0 - cfg.alpha) * cfg.n_obs, 1e-8);
    EXPECT_LE(s.cwiseProduct(y).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LE(inst.slacks.cwiseProduct(Eigen::VectorXd::Ones(y.size()) - y).cwiseAbs().maxCoeff(),
              1e-6);
  }
}

TEST(mc_oracle, no_feasible_descent_direction) {
  auto cfg = small_config();
  const Eigen::MatrixXd x = rs::sample_instance(cfg, 5);
  const auto inst = rs::solve_program(x, cfg.alpha, cfg.eta);
  const double base = exact_objective(x, inst.weights, cfg.alpha, cfg.eta);
  EXPECT_NEAR(base, inst.objective, 1e-8);
  std::mt19937_64 gen(11);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 50; ++k) {
    Eigen::VectorXd d(cfg.n_assets);
    for (auto& v : d) v = normal(gen);
    d.array() -= d.mean();
    for (double step : {1e-4, 1e-2, 1e-1}) {
      EXPECT_GE(exact_objective(x, inst.weights + step * d, cfg.alpha, cfg.eta), base - 1e-9);
    }
  }
}

TEST(mc_oracle, unbounded_above_the_boundary) {
  rs::MCConfig cfg;
  cfg.n_assets = 100;
  cfg.n_obs = 150;
  cfg.alpha = 0.975;
  cfg.eta = 0.0;
  try {
    rs::solve_program(rs::sample_instance(cfg, 0), cfg.alpha, cfg.eta);
    FAIL() << "expected an unbounded program";
  } catch (const rs::Error& e) {
    EXPECT_EQ(e.kind(), rs::ErrorKind::Unbounded);
  }
  cfg.n_samples = 3;
  try {
    rs::estimate_summary(cfg);
    FAIL() << "expected every replication to be unbounded";
  } catch (const rs::Error& e) {
    EXPECT_EQ(e.kind(), rs::ErrorKind::AllUnbounded);
  }
}

TEST(mc_oracle, summary_deterministic_across_workers) {
  auto cfg = small_config();
  cfg.workers = 1;
  const auto a = rs::estimate_summary(cfg);
  cfg.workers = 3;
  const auto b = rs::estimate_summary(cfg);
  EXPECT_EQ(a.q0_hat.mean, b.q0_hat.mean);
  EXPECT_EQ(a.q0_hat.se, b.q0_hat.se);
  EXPECT_EQ(a.delta_hat.mean, b.delta_hat.mean);
  EXPECT_EQ(a.eps_hat.mean, b.eps_hat.mean);
  EXPECT_EQ(a.es_in_hat.mean, b.es_in_hat.mean);
  EXPECT_EQ(a.feasible_fraction, 1.0);
  EXPECT_GE(a.q0_hat.mean, 1.0 - 3.0 * a.q0_hat.se);
}

TEST(mc_oracle, es_ratio_identity) {
  auto cfg = small_config();
  const auto inst = rs::solve_program(rs::sample_instance(cfg, 0), cfg.alpha, cfg.eta);
  const double q0 = inst.weights.squaredNorm() / cfg.n_assets;
  EXPECT_NEAR(rs::gaussian_es_ratio(inst.weights, cfg.alpha), std::sqrt(q0), 1e-12);
  EXPECT_DOUBLE_EQ(rs::gaussian_es_ratio(Eigen::VectorXd::Ones(5), 0.95), 1.0);
}

TEST(mc_oracle, susceptibility_decreases_with_eta) {
  auto cfg = small_config();
  cfg.n_assets = 40;
  cfg.n_obs = 200;
  cfg.n_samples = 10;
  cfg.eta = 0.01;
  const auto low = rs::estimate_susceptibility(cfg);
  cfg.eta = 0.3;
  const auto high = rs::estimate_susceptibility(cfg);
  EXPECT_GT(low.mean, high.mean);
  EXPECT_LT(high.mean, 1.0 / (2.0 * 0.3) + 3.0 * high.se);
}

TEST(mc_oracle, susceptibility_shift_robust) {
  auto cfg = small_config();
  cfg.n_assets = 40;
  cfg.n_obs = 200;
  cfg.n_samples = 12;
  const auto a = rs::estimate_susceptibility(cfg);
  cfg.shift_xi = 5e-4;
  const auto b = rs::estimate_susceptibility(cfg);
  EXPECT_LE(std::abs(a.mean - b.mean), std::hypot(a.se, b.se) * 3.0);
}

TEST(mc_oracle, large_shift_rejected) {
  auto cfg = small_config();
  cfg.shift_xi = 1.0;
  try {
    rs::estimate_susceptibility(cfg);
    FAIL() << "expected ShiftTooLarge";
  } catch (const rs::Error& e) {
    EXPECT_EQ(e.kind(), rs::ErrorKind::ShiftTooLarge);
  }
}

TEST(mc_oracle, invalid_config) {
  auto cfg = small_config();
  cfg.n_assets = 1;
  EXPECT_THROW(rs::validate(cfg), rs::Error);
  cfg = small_config();
  cfg.shift_xi = 0.0;
  EXPECT_THROW(rs::validate(cfg), rs::Error);
  cfg = small_config();
  cfg.n_samples = 0;
  EXPECT_THROW(rs::validate(cfg), rs::Error);
  EXPECT_THROW(rs::solve_program(Eigen::MatrixXd::Ones(2, 3), 1.0, 0.1), rs::Error);
  EXPECT_THROW(rs::solve_program(Eigen::MatrixXd::Ones(2, 3), 0.9, -0.1), rs::Error);
}
