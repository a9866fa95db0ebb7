#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "replica_es/errors.hpp"
#include "replica_es/geometry.hpp"
#include "replica_es/mc_oracle.hpp"
#include "replica_es/saddle.hpp"
#include "replica_es/special_fn.hpp"

namespace rs = replica_es;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit_s;
  std::function<Outcome()> check;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double sqrt_q0_at(double alpha, double r, double eta) {
  return std::sqrt(rs::solve_reduced({alpha, r, eta}).q0);
}

Outcome anchor() {
  const auto tol = boost::math::tools::eps_tolerance<double>(45);
  std::uintmax_t it = 100;
  auto f = [](double log_r) { return sqrt_q0_at(0.975, std::exp(log_r), 0.0) - 1.05; };
  const auto br = boost::math::tools::toms748_solve(f, std::log(1e-3), std::log(0.1), tol, it);
  const double r = std::exp(0.5 * (br.first + br.second));
  const double target = 100.0 / 7200.0;
  const double rel = std::abs(r - target) / target;
  return {rel <= 0.1, fmt("r(sqrt q0 = 1.05) = %.6f, target %.6f, relative deviation %.3f (limit 0.1)",
                          r, target, rel)};
}

Outcome corner() {
  const double rc = rs::phase_boundary_at(0.999).r_c;
  return {rc >= 0.45 && rc <= 0.5, fmt("r_c(0.999) = %.12f, band [0.45, 0.5]", rc)};
}

Outcome divergence() {
  const double alpha = 0.975;
  double lo = 0.3;
  double hi = 0.6;
  auto q0 = [&](double r) -> std::optional<double> {
    try {
      return rs::solve_reduced({alpha, r, 0.0}).q0;
    } catch (const rs::Error& e) {
      if (e.kind() != rs::ErrorKind::InfeasibleRegion) throw;
      return std::nullopt;
    }
  };
  // Bisection toward the point of feasibility loss, stopping once q0 exceeds 1e6.
  std::optional<double> found;
  double r_found = 0.0;
  for (int k = 0; k < 200 && !found; ++k) {
    const double mid = 0.5 * (lo + hi);
    const auto v = q0(mid);
    if (!v) {
      hi = mid;
    } else if (*v > 1e6) {
      found = v;
      r_found = mid;
    } else {
      lo = mid;
    }
  }
  if (!found) return {false, "no r with q0 > 1e6 found below the feasibility loss"};
  const bool below = r_found < hi && !q0(hi).has_value();
  return {below, fmt("q0 = %.3e at r = %.15f; infeasible at r = %.15f", *found, r_found, hi)};
}

Outcome regularized_far_above() {
  const auto s = rs::solve_reduced({0.975, 1.0, 0.05});
  const bool ok = std::isfinite(s.q0) && std::isfinite(s.delta) && s.residual_norm <= 1e-10;
  return {ok, fmt("q0 = %.6f, delta = %.6f, residual %.1e", s.q0, s.delta, s.residual_norm)};
}

Outcome cross_path() {
  std::mt19937_64 gen(20240601);
  std::uniform_real_distribution<double> ua(0.6, 0.99);
  std::uniform_real_distribution<double> ur(0.05, 2.0);
  std::uniform_real_distribution<double> ul(std::log(1e-3), std::log(0.5));
  double worst = 0.0;
  int failures = 0;
  for (int k = 0; k < 50; ++k) {
    const rs::ProblemParams p{ua(gen), ur(gen), std::exp(ul(gen))};
    try {
      const auto s = rs::solve_reduced(p);
      const auto op = rs::eliminate_conjugates(s.q0, s.delta, s.epsilon, p);
      worst = std::max(worst, rs::full_residuals(op, p).max_abs());
    } catch (const rs::Error& e) {
      ++failures;
      std::printf("  draw %d (%.4f, %.4f, %.4g): %s\n", k, p.alpha, p.r, p.eta, e.what());
    }
  }
  return {failures == 0 && worst <= 1e-8,
          fmt("50 draws, %d failures, worst six-equation residual %.2e (limit 1e-8)", failures, worst)};
}

struct McPoint {
  rs::MCConfig cfg;
  rs::ReducedSolution replica;
  rs::MCSummary summary;
};

const std::vector<McPoint>& mc_points() {
  static const std::vector<McPoint> points = [] {
    std::vector<McPoint> out;
    for (auto [n, t, alpha, eta] : {std::tuple{200, 1000, 0.9, 0.01}, std::tuple{300, 300, 0.975, 0.05}}) {
      rs::MCConfig cfg;
      cfg.n_assets = n;
      cfg.n_obs = t;
      cfg.alpha = alpha;
      cfg.eta = eta;
      cfg.n_samples = 100;
      cfg.seed = 2024;
      McPoint pt{cfg, rs::solve_reduced({alpha, static_cast<double>(n) / t, eta}), {}};
      pt.summary = rs::estimate_summary(cfg);
      out.push_back(pt);
    }
    return out;
  }();
  return points;
}

double z(const rs::Estimate& e, double v) { return (e.mean - v) / e.se; }

std::string point_tag(const McPoint& pt) {
  return fmt("(N=%d, T=%d, alpha=%.3f, eta=%.2f)", pt.cfg.n_assets, pt.cfg.n_obs, pt.cfg.alpha,
             pt.cfg.eta);
}

Outcome oracle_equivalence() {
  bool ok = true;
  std::string detail;
  for (const auto& pt : mc_points()) {
    const double zq = z(pt.summary.q0_hat, pt.replica.q0);
    const double zd = z(pt.summary.delta_hat, pt.replica.delta);
    const double ze = z(pt.summary.eps_hat, pt.replica.epsilon);
    ok = ok && std::abs(zq) <= 3 && std::abs(zd) <= 3 && std::abs(ze) <= 3;
    detail += fmt("%s z(q0)=%.2f z(delta)=%.2f z(eps)=%.2f; ", point_tag(pt).c_str(), zq, zd, ze);
  }
  return {ok, detail};
}

Outcome out_of_sample_identity() {
  bool ok = true;
  std::string detail;
  for (const auto& pt : mc_points()) {
    const double zr = z(pt.summary.es_out_ratio, std::sqrt(pt.replica.q0));
    const double id = pt.summary.max_ratio_identity_error;
    ok = ok && id <= 1e-12 && std::abs(zr) <= 3;
    detail += fmt("%s identity error %.1e, ratio %.4f vs sqrt(q0) %.4f, z=%.2f; ", point_tag(pt).c_str(),
                  id, pt.summary.es_out_ratio.mean, std::sqrt(pt.replica.q0), zr);
  }
  return {ok, detail};
}

Outcome in_sample_identity() {
  bool ok = true;
  std::string detail;
  for (const auto& pt : mc_points()) {
    // Criterion compares the CVaR part of the objective, so the ridge share of F is removed.
    const double zc = z(pt.summary.es_in_hat, pt.replica.es_cvar_in_sample);
    const double z_full = z(pt.summary.es_in_hat, pt.replica.es_in_sample);
    ok = ok && std::abs(zc) <= 3;
    detail += fmt("%s MC %.4f vs r(F - eta q0)/(1 - alpha) %.4f z=%.2f (rF/(1 - alpha) %.4f z=%.2f); ",
                  point_tag(pt).c_str(), pt.summary.es_in_hat.mean, pt.replica.es_cvar_in_sample, zc,
                  pt.replica.es_in_sample, z_full);
  }
  return {ok, detail};
}

Outcome fig8_structure() {
  const auto curve = rs::trace_r_of_eta(0.975, 1.05, {1e-4, 10.0});
  if (curve.turning_points.empty()) return {false, "no turning point"};
  const auto& turn = curve.points[curve.turning_points.front()];
  const double rc = rs::phase_boundary_at(0.975).r_c;
  // Two r values at eta = eta_turn / 2.
  const double eta = 0.5 * turn.x;
  std::vector<double> roots;
  for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
    const auto& a = curve.points[i];
    const auto& b = curve.points[i + 1];
    if (a.component == b.component && (a.x - eta) * (b.x - eta) <= 0.0 && a.x != b.x) {
      roots.push_back(a.r + (eta - a.x) / (b.x - a.x) * (b.r - a.r));
    }
  }
  const bool two = roots.size() >= 2;
  const bool inside = turn.r <= rc;
  std::string width_text;
  bool width_ok = false;
  try {
    const double width = rs::transition_width(curve);
    width_ok = width <= 10.0;
    width_text = fmt("transition_width %.3f (limit 10)", width);
  } catch (const rs::Error& e) {
    const auto zone = rs::transition_zone(curve);
    width_text = fmt("transition_width undefined (%s): the upper branch has min |dlog r/dlog eta| "
                     "= %.3f at r = %.3f, never 0.5; lower-branch crossing at r = %.4f",
                     std::string(rs::to_string(e.kind())).c_str(), zone.upper_min_slope,
                     zone.r_at_upper_min_slope, zone.r_lower_crossing.value_or(NAN));
  }
  return {two && inside && width_ok,
          fmt("turning point at eta = %.4f, r = %.5f (r_c = %.5f, %s); %zu r values at eta = %.4f; ",
              turn.x, turn.r, rc, inside ? "inside" : "outside", roots.size(), eta) +
              width_text};
}

Outcome special_functions() {
  const double h = 1e-5;
  double worst = 0.0;
  for (int k = 0; k <= 1200; ++k) {
    const double x = -6.0 + 0.01 * k;
    worst = std::max(worst, std::abs((rs::psi(x + h) - rs::psi(x - h)) / (2 * h) - rs::phi(x)));
    worst = std::max(worst, std::abs((rs::w_fn(x + h) - rs::w_fn(x - h)) / (2 * h) - rs::psi(x)));
  }
  double jump = 0.0;
  for (double knot : {-1.0, 0.0}) {
    const double d = std::ldexp(1.0, -30);
    jump = std::max(jump, std::abs(rs::g(knot - d) - rs::g(knot + d)) / d);
    jump = std::max(jump, std::abs(rs::g_prime(knot - d) - rs::g_prime(knot + d)) / d);
  }
  return {worst <= 1e-8 && jump <= 4.0,
          fmt("max derivative-chain error %.2e (limit 1e-8); max knot jump / offset %.2f (bounded)",
              worst, jump)};
}

double interpolate_r(const rs::CurveResult& c, double alpha) {
  for (std::size_t i = 0; i + 1 < c.points.size(); ++i) {
    const auto& a = c.points[i];
    const auto& b = c.points[i + 1];
    if (a.component == b.component && a.branch == b.branch &&
        (a.branch == rs::BranchLabel::single || a.branch == rs::BranchLabel::lower) &&
        (a.x - alpha) * (b.x - alpha) <= 0.0 && a.x != b.x) {
      return a.r + (alpha - a.x) / (b.x - a.x) * (b.r - a.r);
    }
  }
  return NAN;
}

Outcome monotonicity() {
  int eta_violations = 0;
  for (double alpha : {0.7, 0.8, 0.9, 0.95, 0.975}) {
    const double rc = rs::phase_boundary_at(alpha).r_c;
    for (double frac : {0.2, 0.5, 0.8}) {
      double prev = INFINITY;
      for (double eta : {0.0, 0.001, 0.01, 0.05, 0.1, 0.3, 1.0}) {
        const double q0 = rs::solve_reduced({alpha, frac * rc, eta}).q0;
        eta_violations += q0 > prev * (1.0 + 1e-12);
        prev = q0;
      }
    }
  }
  int nest_violations = 0;
  std::vector<rs::CurveResult> iso;
  for (double level : {1.05, 1.1, 1.25, 1.5, 2.0}) iso.push_back(rs::trace_iso_q0(level, 0.0, {0.6, 0.99}));
  for (double alpha = 0.62; alpha < 0.99; alpha += 0.04) {
    for (std::size_t i = 1; i < iso.size(); ++i) {
      nest_violations += !(interpolate_r(iso[i], alpha) > interpolate_r(iso[i - 1], alpha));
    }
  }
  int shift_violations = 0;
  std::vector<rs::CurveResult> delta_lines;
  for (double eta : {0.0, 0.01, 0.03, 0.1, 0.3}) delta_lines.push_back(rs::trace_iso_delta(1.0, eta, {0.6, 0.99}));
  for (double alpha = 0.62; alpha < 0.99; alpha += 0.04) {
    for (std::size_t i = 1; i < delta_lines.size(); ++i) {
      shift_violations +=
          !(interpolate_r(delta_lines[i], alpha) > interpolate_r(delta_lines[i - 1], alpha));
    }
  }
  return {eta_violations == 0 && nest_violations == 0 && shift_violations == 0,
          fmt("q0(eta) increases: %d; iso-q0 nesting breaks: %d; delta = 1 line not shifted up: %d",
              eta_violations, nest_violations, shift_violations)};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "anchor r(sqrt q0 = 1.05) at alpha = 0.975", 1.0, anchor},
      {2, "phase-boundary corner r_c(0.999)", 60.0, corner},
      {3, "q0 divergence below the boundary", 60.0, divergence},
      {4, "regularized solution far above the boundary", 1.0, regularized_far_above},
      {5, "cross-path equivalence, 50 draws", 300.0, cross_path},
      {6, "Monte Carlo oracle equivalence", 900.0, oracle_equivalence},
      {7, "out-of-sample ES ratio identity", 900.0, out_of_sample_identity},
      {8, "in-sample ES identity", 900.0, in_sample_identity},
      {9, "r-of-eta structure at alpha = 0.975, level 1.05", 300.0, fig8_structure},
      {10, "special-function suite", 1.0, special_functions},
      {11, "monotonicity suite", 300.0, monotonicity},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = seconds <= c.time_limit_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("criterion %2d %s: %s. %s [%.2f s, limit %.0f s%s]\n", c.id, pass ? "PASS" : "FAIL",
                c.name.c_str(), o.detail.c_str(), seconds, c.time_limit_s,
                in_time ? "" : ", exceeded");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
