#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <boost/math/tools/roots.hpp>
#include <spdlog/spdlog.h>

#include "replica_es/errors.hpp"
#include "replica_es/reduced_system.hpp"
#include "replica_es/saddle.hpp"
#include "replica_es/special_fn.hpp"

namespace replica_es {

ScaledPoint ScaledPoint::from_reduced(const ReducedPoint& x) noexcept {
  const double sigma = std::sqrt(x.q0);
  return {x.delta / sigma, x.epsilon / sigma, sigma};
}

ReducedPoint ScaledPoint::to_reduced() const noexcept {
  return {sigma * sigma, c * sigma, b * sigma};
}

namespace {

// Pieces of the reduced system that depend on (c, b) only. For b >= 0 every
// difference is taken between upper tails so nothing cancels against 1.
struct Kernels {
  double k_phi;      // Phi(b + c) - Phi(b)
  double e2;         // alpha - (Psi(b + c) - Psi(b)) / c
  double rest;       // e3 without 1/(2 c^2 sigma^2) and -2 eta sigma / c
  double tail_phi;   // Phi(-b - c)
  double tail_psi;   // Psi(-b - c)
};

Kernels kernels(double c, double b, const ProblemParams& p) {
  const double a = p.alpha;
  const double r = p.r;
  Kernels k{};
  k.tail_phi = phi_upper(b + c);
  k.tail_psi = psi(-b - c);
  if (b >= 0.0) {
    k.k_phi = phi_upper(b) - k.tail_phi;
    k.e2 = (a - 1.0) + (psi(-b) - k.tail_psi) / c;
    k.rest = 0.5 / (c * c) - (1.0 - a) * b / (r * c) - (w_fn(-b) - w_fn(-b - c)) / (r * c * c);
  } else {
    k.k_phi = phi(b + c) - phi(b);
    k.e2 = a - (psi(b + c) - psi(b)) / c;
    k.rest = 0.5 / (c * c) + a * b / (r * c) + 0.5 / r - (w_fn(b + c) - w_fn(b)) / (r * c * c);
  }
  return k;
}

}  // namespace

ReducedEval evaluate_scaled(const ScaledPoint& x, const ProblemParams& p, bool with_jacobian) {
  const double c = x.c;
  const double b = x.b;
  const double s = x.sigma;
  const double r = p.r;
  const double eta = p.eta;
  if (!(c > 0.0) || !(s > 0.0)) fail(ErrorKind::DomainError, "q0 and delta must be positive");
  const Kernels k = kernels(c, b, p);

  ReducedEval ev;
  const double e1 = r * (1.0 - 2.0 * eta * c * s) - k.k_phi;
  const double e2 = k.e2;
  const double e3 = 0.5 / (c * c * s * s) - 2.0 * eta * s / c + k.rest;
  ev.residual << e1, e2, e3;
  ev.jacobian.setZero();
  if (!with_jacobian) return ev;

  const double pdf_bc = normal_pdf(b + c);
  const double pdf_b = normal_pdf(b);
  auto& j = ev.jacobian;
  j(0, kC) = -2.0 * r * eta * s - pdf_bc;
  j(0, kB) = pdf_b - pdf_bc;
  j(0, kSigma) = -2.0 * r * eta * c;
  j(0, kR) = 1.0 - 2.0 * eta * c * s;
  j(0, kEta) = -2.0 * r * c * s;

  j(1, kC) = (k.tail_phi - (1.0 - p.alpha) - e2) / c;
  j(1, kB) = -k.k_phi / c;
  j(1, kAlpha) = 1.0;

  j(2, kC) = -((1.0 - p.alpha) * b + k.tail_psi) / (r * c * c) - 2.0 * eta * s / (c * c) -
             2.0 * e3 / c;
  j(2, kB) = e2 / (r * c);
  j(2, kSigma) = -1.0 / (c * c * s * s * s) - 2.0 * eta / c;
  j(2, kAlpha) = b / (r * c);
  j(2, kR) = -(e3 - 0.5 / (c * c * s * s) - 0.5 / (c * c) + 2.0 * eta * s / c) / r;
  j(2, kEta) = -2.0 * s / c;
  return ev;
}

Eigen::Vector3d residual_scale(const ScaledPoint& x, const ProblemParams& p) noexcept {
  const double c = x.c;
  const double s = x.sigma;
  const double e3_scale = 0.5 / (c * c * s * s) + 0.5 / (c * c) + 0.5 / p.r +
                          std::abs(p.alpha * x.b) / (p.r * c) + 2.0 * p.eta * s / c;
  return {p.r, 1.0, e3_scale};
}

double offset_for_width(double c, double alpha) {
  const ProblemParams p{alpha, 1.0, 0.0};
  auto f = [&](double b) { return kernels(c, b, p).e2; };
  double lo = -c - 40.0;
  double hi = 40.0;
  std::uintmax_t iters = 300;
  const auto bracket = boost::math::tools::toms748_solve(
      f, lo, hi, f(lo), f(hi), boost::math::tools::eps_tolerance<double>(52), iters);
  double b = 0.5 * (bracket.first + bracket.second);
  // Newton polish: de2/db = -k_phi / c.
  for (int i = 0; i < 3; ++i) {
    const Kernels k = kernels(c, b, p);
    if (k.k_phi <= 0.0) break;
    const double step = k.e2 * c / k.k_phi;
    if (!std::isfinite(step) || std::abs(step) > 1e-6 * (1.0 + std::abs(b))) break;
    b += step;
  }
  return b;
}

namespace {

enum class NewtonStatus { Converged, Overflow, Singular, Stalled, Unphysical };

struct NewtonResult {
  NewtonStatus status = NewtonStatus::Stalled;
  ScaledPoint x;
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

bool overflowed(const ScaledPoint& x, const SolverOptions& o) {
  return !(x.sigma * x.sigma <= o.overflow_guard) || !(x.c * x.sigma <= o.overflow_guard);
}

double scaled_norm(const Eigen::Vector3d& e, const Eigen::Vector3d& scale) {
  return e.cwiseQuotient(scale).norm();
}

std::optional<Eigen::Vector3d> try_residual(const ScaledPoint& x, const ProblemParams& p) {
  try {
    const Eigen::Vector3d e = evaluate_scaled(x, p, false).residual;
    if (!e.allFinite()) return std::nullopt;
    return e;
  } catch (const Error&) {
    return std::nullopt;
  }
}

ScaledPoint from_log(const Eigen::Vector3d& y) { return {std::exp(y[0]), y[1], std::exp(y[2])}; }
Eigen::Vector3d to_log(const ScaledPoint& x) { return {std::log(x.c), x.b, std::log(x.sigma)}; }

// Damped Newton in (log c, b, log sigma).
NewtonResult newton(ScaledPoint x, const ProblemParams& p, const SolverOptions& o) {
  NewtonResult out;
  Eigen::Vector3d y = to_log(x);
  double best_stall = std::numeric_limits<double>::infinity();
  int stall_count = 0;
  int polish = 0;
  for (int it = 0; it < o.max_iterations; ++it) {
    out.iterations = it;
    x = from_log(y);
    if (overflowed(x, o)) {
      out.status = NewtonStatus::Overflow;
      out.x = x;
      return out;
    }
    const ReducedEval ev = evaluate_scaled(x, p, true);
    const Eigen::Vector3d& e = ev.residual;
    if (!e.allFinite()) break;
    const double res = e.cwiseAbs().maxCoeff();
    out.x = x;
    out.residual = res;

    Eigen::Matrix3d jy;
    jy.col(0) = ev.jacobian.col(kC) * x.c;
    jy.col(1) = ev.jacobian.col(kB);
    jy.col(2) = ev.jacobian.col(kSigma) * x.sigma;
    // Rows by equation magnitude, columns by their largest entry: near the
    // boundary the sigma column is many orders smaller than the others.
    const Eigen::Vector3d scale = residual_scale(x, p);
    Eigen::Matrix3d js = scale.cwiseInverse().asDiagonal() * jy;
    const Eigen::Vector3d col_scale = js.cwiseAbs().colwise().maxCoeff().transpose().cwiseMax(1e-300);
    js = js * col_scale.cwiseInverse().asDiagonal();
    Eigen::FullPivLU<Eigen::Matrix3d> lu(js);
    lu.setThreshold(1e-13);
    if (lu.rank() < 3) {
      out.status = res <= o.tolerance ? NewtonStatus::Converged : NewtonStatus::Singular;
      return out;
    }
    Eigen::Vector3d dy = lu.solve(-e.cwiseQuotient(scale)).cwiseQuotient(col_scale);
    if (!dy.allFinite()) {
      out.status = res <= o.tolerance ? NewtonStatus::Converged : NewtonStatus::Singular;
      return out;
    }
    // Converged once the residual is within tolerance and the Newton correction
    // is negligible; the second test matters where q0 is poorly determined by
    // the absolute residual.
    if (res <= o.tolerance) {
      if (dy.cwiseAbs().maxCoeff() <= 1e-11 || ++polish > 40) {
        out.status = NewtonStatus::Converged;
        return out;
      }
    } else if (res < best_stall * 0.5) {
      best_stall = res;
      stall_count = 0;
    } else if (++stall_count > 8) {
      out.status = NewtonStatus::Stalled;
      return out;
    }

    const double cap = 2.0;
    const double big = dy.cwiseAbs().maxCoeff();
    if (big > cap) dy *= cap / big;

    const double f0 = scaled_norm(e, scale);
    double lambda = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      const Eigen::Vector3d yt = y + lambda * dy;
      const ScaledPoint xt = from_log(yt);
      if (overflowed(xt, o)) {
        lambda *= 0.5;
        continue;
      }
      if (auto et = try_residual(xt, p)) {
        if (scaled_norm(*et, scale) <= (1.0 - 1e-4 * lambda) * f0) {
          y = yt;
          accepted = true;
          break;
        }
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      // Accept the full step anyway near roundoff; otherwise give up.
      if (f0 < 1e-12 || res <= o.tolerance) {
        y += dy;
        continue;
      }
      out.status = NewtonStatus::Stalled;
      return out;
    }
  }
  out.status = NewtonStatus::Stalled;
  return out;
}

// Levenberg-Marquardt on the scaled residuals with a forward-difference Jacobian.
std::optional<ScaledPoint> levenberg_marquardt(ScaledPoint x0, const ProblemParams& p,
                                               const SolverOptions& o) {
  Eigen::Vector3d y = to_log(x0);
  auto eval = [&](const Eigen::Vector3d& yy) -> std::optional<Eigen::Vector3d> {
    const ScaledPoint xx = from_log(yy);
    if (overflowed(xx, o)) return std::nullopt;
    auto e = try_residual(xx, p);
    if (!e) return std::nullopt;
    return e->cwiseQuotient(residual_scale(xx, p));
  };
  auto f = eval(y);
  if (!f) return std::nullopt;
  double mu = 1e-3;
  for (int it = 0; it < 300; ++it) {
    Eigen::Matrix3d jac;
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-7 * (1.0 + std::abs(y[k]));
      Eigen::Vector3d yh = y;
      yh[k] += h;
      auto fh = eval(yh);
      if (!fh) return std::nullopt;
      jac.col(k) = (*fh - *f) / h;
    }
    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    const Eigen::Vector3d g = jac.transpose() * *f;
    bool improved = false;
    for (int tries = 0; tries < 20; ++tries) {
      Eigen::Matrix3d a = jtj;
      a.diagonal() += mu * jtj.diagonal().cwiseMax(1e-12);
      Eigen::Vector3d dy = a.ldlt().solve(-g);
      const double big = dy.cwiseAbs().maxCoeff();
      if (big > 2.0) dy *= 2.0 / big;
      auto ft = eval(y + dy);
      if (ft && ft->squaredNorm() < f->squaredNorm()) {
        y += dy;
        f = ft;
        mu = std::max(mu / 3.0, 1e-12);
        improved = true;
        break;
      }
      mu *= 4.0;
    }
    if (!improved) break;
    if (f->norm() < 1e-6) break;
  }
  if (f->norm() < 1e-2) return from_log(y);
  return std::nullopt;
}

std::vector<double> width_grid() {
  std::vector<double> grid;
  for (double c = 1e-6; c < 1e7; c *= 1.25) grid.push_back(c);
  return grid;
}

template <class F>
double refine_root(F&& f, double lo, double hi, double flo, double fhi) {
  std::uintmax_t iters = 200;
  const auto br = boost::math::tools::toms748_solve(
      f, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(50), iters);
  return 0.5 * (br.first + br.second);
}

// At eta = 0 the first two equations fix (c, b); the third then gives sigma^2
// in closed form, or shows that no finite sigma exists.
std::optional<ScaledPoint> nested_start_unregularized(const ProblemParams& p,
                                                      const SolverOptions& o) {
  if (p.r >= 1.0) return std::nullopt;
  auto h = [&](double c) { return kernels(c, offset_for_width(c, p.alpha), p).k_phi - p.r; };
  const auto grid = width_grid();
  double prev_c = grid.front();
  double prev_h = h(prev_c);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double c = grid[i];
    const double hc = h(c);
    if (prev_h < 0.0 && hc >= 0.0) {
      const double root = refine_root(h, prev_c, c, prev_h, hc);
      const double b = offset_for_width(root, p.alpha);
      const double rest = kernels(root, b, p).rest;
      if (!(rest < 0.0)) return std::nullopt;
      const double sigma2 = -0.5 / (root * root * rest);
      if (!(sigma2 <= o.overflow_guard)) return std::nullopt;
      return ScaledPoint{root, b, std::sqrt(sigma2)};
    }
    prev_c = c;
    prev_h = hc;
  }
  return std::nullopt;
}

// For eta > 0: b from the second equation, sigma from the first, then a 1-D
// bracketed root of the third in c. The third residual tends to -inf as c -> 0.
std::vector<ScaledPoint> nested_start_regularized(const ProblemParams& p) {
  struct Probe {
    double c, b, sigma, e3;
  };
  auto probe = [&](double c) -> std::optional<Probe> {
    const double b = offset_for_width(c, p.alpha);
    const Kernels k = kernels(c, b, p);
    const double sigma = (p.r - k.k_phi) / (2.0 * p.r * p.eta * c);
    if (!(sigma > 0.0)) return std::nullopt;
    const double e3 = 0.5 / (c * c * sigma * sigma) - 2.0 * p.eta * sigma / c + k.rest;
    return Probe{c, b, sigma, e3};
  };
  std::vector<ScaledPoint> starts;
  const auto grid = width_grid();
  std::optional<Probe> prev = probe(grid.front());
  for (std::size_t i = 1; i < grid.size() && prev; ++i) {
    auto cur = probe(grid[i]);
    if (!cur) {
      // sigma -> 0+ at the domain edge drives e3 to +inf; bisect toward it.
      double lo = prev->c;
      double hi = grid[i];
      for (int k = 0; k < 200 && prev->e3 < 0.0; ++k) {
        const double mid = std::sqrt(lo * hi);
        auto pm = probe(mid);
        if (!pm) {
          hi = mid;
        } else if (pm->e3 >= 0.0) {
          cur = pm;
          break;
        } else {
          lo = mid;
          prev = pm;
        }
        if (hi / lo - 1.0 < 1e-15) break;
      }
      if (!cur) break;
    }
    if (prev->e3 < 0.0 && cur->e3 >= 0.0) {
      auto f = [&](double c) {
        auto pr = probe(c);
        return pr ? pr->e3 : std::numeric_limits<double>::infinity();
      };
      const double root = refine_root(f, prev->c, cur->c, prev->e3, cur->e3);
      if (auto pr = probe(root)) starts.push_back({pr->c, pr->b, pr->sigma});
    }
    prev = cur;
  }
  return starts;
}

bool acceptable(const NewtonResult& r) {
  return r.status == NewtonStatus::Converged && r.x.sigma >= 1.0 - 1e-9 && r.x.c > 0.0;
}

ReducedSolution finish(const ProblemParams& p, const NewtonResult& nr) {
  return make_solution(p, nr.x, nr.residual, nr.iterations);
}

}  // namespace

ReducedSolution make_solution(const ProblemParams& p, const ScaledPoint& xs, double residual_norm,
                              int iterations) {
  ReducedSolution sol;
  sol.params = p;
  const ReducedPoint x = xs.to_reduced();
  sol.q0 = std::max(x.q0, 1.0);
  sol.delta = x.delta;
  sol.epsilon = x.epsilon;
  sol.residual_norm = residual_norm;
  sol.iterations = iterations;
  const OrderParams op = eliminate_conjugates(sol.q0, sol.delta, sol.epsilon, p);
  sol.free_energy = free_energy(op, p);
  sol.es_in_sample = p.r * sol.free_energy / (1.0 - p.alpha);
  sol.es_cvar_in_sample = p.r * (sol.free_energy - p.eta * sol.q0) / (1.0 - p.alpha);
  sol.rel_error = std::sqrt(sol.q0) - 1.0;
  return sol;
}

ReducedSolution solve_reduced(const ProblemParams& p, std::optional<ReducedPoint> init,
                              const SolverOptions& options) {
  validate(p);
  int total_iterations = 0;
  auto attempt = [&](const ScaledPoint& x) -> std::optional<ReducedSolution> {
    if (!(x.c > 0.0) || !(x.sigma > 0.0) || !std::isfinite(x.b)) return std::nullopt;
    const NewtonResult nr = newton(x, p, options);
    total_iterations += nr.iterations;
    if (!acceptable(nr)) return std::nullopt;
    ReducedSolution sol = finish(p, nr);
    sol.iterations = total_iterations;
    return sol;
  };

  if (init && init->q0 > 0.0 && init->delta > 0.0) {
    if (auto s = attempt(ScaledPoint::from_reduced(*init))) return *s;
  }

  const double z = normal_quantile(p.alpha);
  // Default guess; the second variant carries the VaR sign of a unit-variance portfolio.
  const ReducedPoint guess{1.5, 0.5, -0.5 * std::sqrt(1.5) * z};
  if (auto s = attempt(ScaledPoint::from_reduced(guess))) return *s;
  const ReducedPoint flipped{1.5, 0.5, 0.5 * std::sqrt(1.5) * z};
  if (auto s = attempt(ScaledPoint::from_reduced(flipped))) return *s;

  if (p.eta == 0.0) {
    const auto start = nested_start_unregularized(p, options);
    if (!start) {
      fail(ErrorKind::InfeasibleRegion, "no finite q0 at eta = 0: on or above the phase boundary");
    }
    if (auto s = attempt(*start)) return *s;
    fail(ErrorKind::NoConvergence, "reduced system did not converge at eta = 0");
  }

  if (auto lm = levenberg_marquardt(ScaledPoint::from_reduced(guess), p, options)) {
    if (auto s = attempt(*lm)) return *s;
  }
  for (const ScaledPoint& start : nested_start_regularized(p)) {
    if (auto s = attempt(start)) return *s;
  }
  spdlog::debug("solve_reduced failed at alpha={} r={} eta={}", p.alpha, p.r, p.eta);
  fail(ErrorKind::NoConvergence, "reduced system did not converge");
}

}  // namespace replica_es
