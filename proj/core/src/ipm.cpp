#include "ipm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "replica_es/errors.hpp"

namespace replica_es::detail {

namespace {

// Best iterate accepted at this multiple of the tolerance once progress stops.
constexpr double kAcceptFactor = 100.0;

struct Residuals {
  Eigen::VectorXd w;  // 2 eta w - X y - lambda 1
  double eps = 0.0;   // (1 - alpha) T - sum y
  Eigen::VectorXd u;  // 1 - y - v
  Eigen::VectorXd s;  // X^T w + eps + u - s
  double budget = 0.0;
};

struct Direction {
  Eigen::VectorXd w;
  double eps = 0.0;
  Eigen::VectorXd u;
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  Eigen::VectorXd v;
  double lambda = 0.0;
};

Residuals residuals(const Eigen::MatrixXd& x, double alpha, double eta, const IpmPoint& p) {
  const auto n = static_cast<double>(x.rows());
  const auto t = static_cast<double>(x.cols());
  Residuals r;
  r.w = 2.0 * eta * p.w - x * p.y - Eigen::VectorXd::Constant(p.w.size(), p.lambda);
  r.eps = (1.0 - alpha) * t - p.y.sum();
  r.u = Eigen::VectorXd::Ones(p.y.size()) - p.y - p.v;
  r.s = x.transpose() * p.w + Eigen::VectorXd::Constant(p.u.size(), p.eps) + p.u - p.s;
  r.budget = p.w.sum() - n;
  return r;
}

class KktSolver {
 public:
  KktSolver(const Eigen::MatrixXd& x, double eta, const IpmPoint& p) : x_(x) {
    const Eigen::Index n = x.rows();
    d_inv_ = (p.u.cwiseQuotient(p.v) + p.s.cwiseQuotient(p.y)).cwiseInverse();
    const Eigen::MatrixXd xs = x * d_inv_.cwiseSqrt().asDiagonal();
    // Bordered system in (dw, deps, dlambda).
    k_ = Eigen::MatrixXd::Zero(n + 2, n + 2);
    k_.topLeftCorner(n, n).selfadjointView<Eigen::Lower>().rankUpdate(xs);
    k_.topLeftCorner(n, n).triangularView<Eigen::StrictlyUpper>() =
        k_.topLeftCorner(n, n).transpose();
    k_.topLeftCorner(n, n).diagonal().array() += 2.0 * eta;
    const Eigen::VectorXd a = x * d_inv_;
    k_.block(0, n, n, 1) = a;
    k_.block(n, 0, 1, n) = a.transpose();
    k_(n, n) = d_inv_.sum();
    k_.block(0, n + 1, n, 1).setConstant(-1.0);
    k_.block(n + 1, 0, 1, n).setConstant(-1.0);
    lu_.compute(k_);
  }

  // Complementarity right-hand sides: cs = s o y - target, cu = u o v - target.
  Direction solve(const IpmPoint& p, const Residuals& r, const Eigen::VectorXd& cs,
                  const Eigen::VectorXd& cu) const {
    const Eigen::Index n = x_.rows();
    const Eigen::VectorXd g =
        -r.s + (cu + p.u.cwiseProduct(r.u)).cwiseQuotient(p.v) - cs.cwiseQuotient(p.y);
    const Eigen::VectorXd dg = d_inv_.cwiseProduct(g);
    Eigen::VectorXd rhs(n + 2);
    rhs.head(n) = -r.w + x_ * dg;
    rhs(n) = -r.eps + dg.sum();
    rhs(n + 1) = r.budget;
    Eigen::VectorXd z = lu_.solve(rhs);
    z += lu_.solve(rhs - k_ * z);
    Direction d;
    d.w = z.head(n);
    d.eps = z(n);
    d.lambda = z(n + 1);
    d.y = d_inv_.cwiseProduct(g - x_.transpose() * d.w - Eigen::VectorXd::Constant(g.size(), d.eps));
    d.v = r.u - d.y;
    d.u = (-cu - p.u.cwiseProduct(d.v)).cwiseQuotient(p.v);
    d.s = (-cs - p.s.cwiseProduct(d.y)).cwiseQuotient(p.y);
    return d;
  }

 private:
  const Eigen::MatrixXd& x_;
  Eigen::VectorXd d_inv_;
  Eigen::MatrixXd k_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

double max_step(const Eigen::VectorXd& z, const Eigen::VectorXd& dz) {
  double step = 1.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (dz(i) < 0.0) step = std::min(step, -z(i) / dz(i));
  }
  return step;
}

double step_length(const IpmPoint& p, const Direction& d) {
  return std::min({max_step(p.s, d.s), max_step(p.u, d.u), max_step(p.y, d.y),
                   max_step(p.v, d.v)});
}

void apply(IpmPoint& p, const Direction& d, double step) {
  p.w += step * d.w;
  p.eps += step * d.eps;
  p.u += step * d.u;
  p.s += step * d.s;
  p.y += step * d.y;
  p.v += step * d.v;
  p.lambda += step * d.lambda;
}

double primal_objective(double alpha, double eta, const IpmPoint& p) {
  const auto t = static_cast<double>(p.u.size());
  return (1.0 - alpha) * t * p.eps + p.u.sum() + eta * p.w.squaredNorm();
}

}  // namespace

IpmPoint solve_ipm(const Eigen::MatrixXd& x, double alpha, double eta,
                   const ProgramOptions& options) {
  const Eigen::Index n = x.rows();
  const Eigen::Index t = x.cols();
  IpmPoint p;
  p.w = Eigen::VectorXd::Ones(n);
  p.eps = 0.0;
  p.u = Eigen::VectorXd::Ones(t);
  p.y = Eigen::VectorXd::Constant(t, 1.0 - alpha);
  p.v = Eigen::VectorXd::Constant(t, alpha);
  p.s = (x.transpose() * p.w + p.u).cwiseMax(1.0);
  const double comp_count = 2.0 * static_cast<double>(t);
  IpmPoint best = p;
  double best_merit = std::numeric_limits<double>::infinity();

  for (int it = 0; it < options.max_iterations; ++it) {
    p.iterations = it;
    const Residuals r = residuals(x, alpha, eta, p);
    const double gap = p.s.dot(p.y) + p.u.dot(p.v);
    const double obj = primal_objective(alpha, eta, p);
    const double scale = 1.0 + std::abs(obj);
    const double primal_inf =
        std::max(r.s.lpNorm<Eigen::Infinity>(), std::abs(r.budget) / static_cast<double>(n));
    // Dual rows sum O(T) terms of size (1 - alpha); their rounding floor scales with that.
    const double dual_scale = 1.0 + (1.0 - alpha) * static_cast<double>(t);
    const double dual_inf = std::max({r.w.lpNorm<Eigen::Infinity>(), std::abs(r.eps),
                                      r.u.lpNorm<Eigen::Infinity>()}) / dual_scale;
    if (primal_inf <= options.tolerance && dual_inf <= options.tolerance &&
        gap <= 0.1 * options.tolerance * scale) {
      return p;
    }
    const double merit = std::max({primal_inf, dual_inf, gap / scale});
    if (merit < best_merit) {
      best_merit = merit;
      best = p;
    }
    // Past this point the dual rows only accumulate rounding from the y elimination.
    if (gap <= 1e-4 * options.tolerance * scale) break;
    if (p.w.lpNorm<Eigen::Infinity>() > options.divergence_norm) {
      fail(ErrorKind::Unbounded, "weights diverge along a ray of decreasing objective");
    }

    const KktSolver kkt(x, eta, p);
    const double mu = gap / comp_count;
    const Eigen::VectorXd sy = p.s.cwiseProduct(p.y);
    const Eigen::VectorXd uv = p.u.cwiseProduct(p.v);
    const Direction aff = kkt.solve(p, r, sy, uv);
    const double step_aff = step_length(p, aff);
    const double gap_aff = (p.s + step_aff * aff.s).dot(p.y + step_aff * aff.y) +
                           (p.u + step_aff * aff.u).dot(p.v + step_aff * aff.v);
    const double sigma = std::pow(gap_aff / gap, 3);
    const Eigen::VectorXd cs =
        sy + aff.s.cwiseProduct(aff.y) - Eigen::VectorXd::Constant(t, sigma * mu);
    const Eigen::VectorXd cu =
        uv + aff.u.cwiseProduct(aff.v) - Eigen::VectorXd::Constant(t, sigma * mu);
    const Direction d = kkt.solve(p, r, cs, cu);
    const double step = std::min(1.0, 0.995 * step_length(p, d));
    if (!(step > 0.0) || !d.w.allFinite()) break;
    apply(p, d, step);
  }
  if (best_merit <= kAcceptFactor * options.tolerance) return best;
  if (eta == 0.0 && p.w.lpNorm<Eigen::Infinity>() > std::sqrt(options.divergence_norm)) {
    fail(ErrorKind::Unbounded, "weights diverge along a ray of decreasing objective");
  }
  fail(ErrorKind::NoConvergence,
       "interior-point iteration stalled after " + std::to_string(p.iterations) + " steps");
}

}  // namespace replica_es::detail
