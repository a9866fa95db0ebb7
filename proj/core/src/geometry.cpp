#include "replica_es/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include <boost/math/tools/roots.hpp>
#include <spdlog/spdlog.h>

#include "continuation.hpp"
#include "replica_es/reduced_system.hpp"

namespace replica_es {

std::string to_string(CurveKind kind) {
  switch (kind) {
    case CurveKind::phase_boundary: return "phase_boundary";
    case CurveKind::iso_q0: return "iso_q0";
    case CurveKind::iso_delta: return "iso_delta";
    case CurveKind::r_of_eta: return "r_of_eta";
  }
  return "unknown";
}

std::string to_string(BranchLabel label) {
  switch (label) {
    case BranchLabel::single: return "single";
    case BranchLabel::lower: return "lower";
    case BranchLabel::middle: return "middle";
    case BranchLabel::upper: return "upper";
    case BranchLabel::boundary: return "boundary";
  }
  return "unknown";
}

void validate(const CurveSpec& spec) {
  if (!(spec.range.lo < spec.range.hi)) fail(ErrorKind::InvalidArgument, "empty sweep range");
  if (!(spec.min_step > 0.0) || !(spec.min_step <= spec.max_step)) {
    fail(ErrorKind::InvalidArgument, "need 0 < min_step <= max_step");
  }
  if (!(spec.r_window.lo > 0.0) || !(spec.r_window.lo < spec.r_window.hi)) {
    fail(ErrorKind::InvalidArgument, "invalid r window");
  }
  switch (spec.kind) {
    case CurveKind::phase_boundary:
      if (!(spec.range.lo > 0.0 && spec.range.hi < 1.0)) {
        fail(ErrorKind::InvalidArgument, "alpha range must lie in (0, 1)");
      }
      break;
    case CurveKind::iso_q0:
    case CurveKind::iso_delta:
      if (!(spec.range.lo > 0.0 && spec.range.hi < 1.0)) {
        fail(ErrorKind::InvalidArgument, "alpha range must lie in (0, 1)");
      }
      if (!(spec.level > 0.0)) fail(ErrorKind::InvalidArgument, "level must be positive");
      if (spec.kind == CurveKind::iso_q0 && !(spec.level > 1.0)) {
        fail(ErrorKind::InvalidArgument, "sqrt(q0) level must exceed 1");
      }
      if (!(spec.fixed.eta >= 0.0) || !std::isfinite(spec.fixed.eta)) {
        fail(ErrorKind::InvalidArgument, "eta must be nonnegative");
      }
      break;
    case CurveKind::r_of_eta:
      if (!(spec.range.lo > 0.0)) fail(ErrorKind::InvalidArgument, "eta range must be positive");
      if (!(spec.fixed.alpha > 0.0 && spec.fixed.alpha < 1.0)) {
        fail(ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
      }
      if (!(spec.level > 1.0)) fail(ErrorKind::InvalidArgument, "sqrt(q0) level must exceed 1");
      break;
  }
}

namespace {

using detail::PlaneMode;
using detail::PlaneProblem;
using detail::Vec4;

// Beyond this the boundary sits within bisection noise of 0.5.
constexpr double kAlphaResolution = 5e-4;

double level_value(PlaneMode mode, const ReducedSolution& s) {
  return mode == PlaneMode::iso_delta ? s.delta : std::sqrt(s.q0);
}

ProblemParams params_at(const PlaneProblem& pb, double x, double r) {
  ProblemParams p = pb.fixed;
  if (pb.mode == PlaneMode::r_of_eta) {
    p.eta = x;
  } else {
    p.alpha = x;
  }
  p.r = r;
  return p;
}

ReducedPoint point_of(const ReducedSolution& s) { return {s.q0, s.delta, s.epsilon}; }

// Roots in r of value(x, r) = level on a geometric grid, refined by TOMS 748 in log r.
std::vector<ReducedSolution> level_roots(const PlaneProblem& pb, double x, Interval window) {
  struct Sample {
    double log_r;
    double f;
    ReducedSolution sol;
  };
  auto sample = [&](double log_r, std::optional<ReducedPoint> init) -> std::optional<Sample> {
    try {
      const ReducedSolution s = solve_reduced(params_at(pb, x, std::exp(log_r)), init);
      return Sample{log_r, std::log(level_value(pb.mode, s) / pb.level), s};
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::InfeasibleRegion || e.kind() == ErrorKind::NoConvergence) {
        return std::nullopt;
      }
      throw;
    }
  };
  auto refine = [&](const Sample& a, const Sample& b) -> std::optional<ReducedSolution> {
    std::optional<ReducedPoint> init = point_of(a.sol);
    auto f = [&](double log_r) {
      auto s = sample(log_r, init);
      if (!s) return 1.0;  // infeasible lies above every level
      init = point_of(s->sol);
      return s->f;
    };
    std::uintmax_t iters = 100;
    const auto br = boost::math::tools::toms748_solve(
        f, a.log_r, b.log_r, a.f, b.f, boost::math::tools::eps_tolerance<double>(45), iters);
    auto s = sample(0.5 * (br.first + br.second), point_of(a.sol));
    if (!s) return std::nullopt;
    return s->sol;
  };

  std::vector<ReducedSolution> roots;
  const double step = std::log(1.25);
  std::optional<Sample> prev;
  for (double log_r = std::log(window.lo); log_r <= std::log(window.hi) + 1e-12; log_r += step) {
    auto cur = sample(log_r, prev ? std::optional<ReducedPoint>(point_of(prev->sol)) : std::nullopt);
    if (!cur) {
      if (prev && prev->f < 0.0 && pb.fixed.eta == 0.0 && pb.mode != PlaneMode::r_of_eta) {
        // Beyond the boundary: q0 and delta diverge just below it, so a bracket exists.
        double lo = prev->log_r;
        double hi = log_r;
        Sample good = *prev;
        for (int k = 0; k < 200 && hi - lo > 1e-15; ++k) {
          const double mid = 0.5 * (lo + hi);
          auto s = sample(mid, point_of(good.sol));
          if (!s) {
            hi = mid;
          } else if (s->f >= 0.0) {
            if (auto root = refine(good, *s)) roots.push_back(*root);
            break;
          } else {
            lo = mid;
            good = *s;
          }
        }
        break;
      }
      continue;
    }
    if (prev && (prev->f < 0.0) != (cur->f < 0.0)) {
      if (auto root = refine(*prev, *cur)) roots.push_back(*root);
    }
    prev = cur;
  }
  return roots;
}

bool covered(const PlaneProblem& pb, const ReducedSolution& root,
             const std::vector<detail::TraceOutcome>& parts) {
  const ScaledPoint xs = ScaledPoint::from_reduced(point_of(root));
  const Vec4 u = pb.pack(root.params, xs);
  for (const auto& part : parts) {
    for (std::size_t i = 0; i + 1 < part.nodes.size(); ++i) {
      const Vec4& a = part.nodes[i].u;
      const Vec4& b = part.nodes[i + 1].u;
      if ((u[2] - a[2]) * (u[2] - b[2]) > 0.0) continue;
      const double theta = b[2] != a[2] ? (u[2] - a[2]) / (b[2] - a[2]) : 0.0;
      const double log_r = a[3] + theta * (b[3] - a[3]);
      if (std::abs(log_r - u[3]) <= std::max(0.02, 2.0 * std::abs(b[3] - a[3]))) return true;
    }
  }
  return false;
}

void assign_branches(CurveResult& curve) {
  // Segments are maximal runs of one component between turning points.
  struct Segment {
    std::size_t begin, end;
    double mean_log_r;
  };
  std::vector<Segment> segments;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const bool last = i + 1 == curve.points.size();
    const bool split =
        last || curve.points[i].turning || curve.points[i + 1].component != curve.points[i].component;
    if (!split) continue;
    double sum = 0.0;
    for (std::size_t k = begin; k <= i; ++k) sum += std::log(curve.points[k].r);
    segments.push_back({begin, i + 1, sum / static_cast<double>(i + 1 - begin)});
    begin = i + 1;
  }
  if (segments.size() <= 1) {
    for (auto& pt : curve.points) pt.branch = BranchLabel::single;
    return;
  }
  auto [lo, hi] = std::minmax_element(segments.begin(), segments.end(),
                                      [](const Segment& a, const Segment& b) {
                                        return a.mean_log_r < b.mean_log_r;
                                      });
  for (const auto& seg : segments) {
    const BranchLabel label = &seg == &*lo   ? BranchLabel::lower
                              : &seg == &*hi ? BranchLabel::upper
                                             : BranchLabel::middle;
    for (std::size_t k = seg.begin; k < seg.end; ++k) curve.points[k].branch = label;
  }
}

CurveResult trace_level_set(const CurveSpec& spec) {
  validate(spec);
  PlaneProblem pb;
  pb.mode = spec.kind == CurveKind::iso_delta  ? PlaneMode::iso_delta
            : spec.kind == CurveKind::r_of_eta ? PlaneMode::r_of_eta
                                               : PlaneMode::iso_q0;
  pb.level = spec.level;
  pb.fixed = spec.fixed;
  const bool log_sweep = pb.mode == PlaneMode::r_of_eta;

  detail::TraceLimits lim;
  lim.x_range = log_sweep ? Interval{std::log(spec.range.lo), std::log(spec.range.hi)} : spec.range;
  lim.log_r_window = {std::log(spec.r_window.lo), std::log(spec.r_window.hi)};
  lim.max_step = spec.max_step;
  lim.min_step = spec.min_step;
  lim.max_points = spec.max_points;

  // Candidate sweep values: the middle first, then spread over the range.
  std::vector<double> candidates;
  const double a = lim.x_range.lo;
  const double b = lim.x_range.hi;
  candidates.push_back(0.5 * (a + b));
  for (int k = 0; k < 6; ++k) candidates.push_back(a + (b - a) * (k + 0.5) / 6.0);

  std::vector<ReducedSolution> roots;
  for (double xu : candidates) {
    const double x = log_sweep ? std::exp(xu) : xu;
    auto found = level_roots(pb, x, spec.r_window);
    roots.insert(roots.end(), found.begin(), found.end());
  }
  if (roots.empty()) {
    fail(ErrorKind::LevelUnreachable, "no point of the level set in range");
  }

  std::vector<detail::TraceOutcome> parts;
  for (const auto& root : roots) {
    if (covered(pb, root, parts)) continue;
    const Vec4 start = pb.pack(root.params, ScaledPoint::from_reduced(point_of(root)));
    parts.push_back(detail::trace_component(pb, start, lim));
    if (parts.size() >= 4) break;
  }

  CurveResult curve;
  curve.spec = spec;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (!parts[k].complete) {
      curve.complete = false;
      curve.truncation = ErrorKind::NoConvergence;
      curve.truncation_reason = parts[k].reason;
    }
    for (const auto& node : parts[k].nodes) {
      const auto [p, xs] = pb.unpack(node.u);
      CurvePoint pt;
      pt.x = pb.report_x(node.u);
      pt.r = p.r;
      try {
        pt.solution = solve_reduced(p, xs.to_reduced());
      } catch (const Error& e) {
        spdlog::warn("dropping curve point at x={} r={}: {}", pt.x, pt.r, e.what());
        continue;
      }
      pt.turning = node.turning;
      pt.component = static_cast<int>(k);
      pt.tangent_x = node.t[2];
      pt.tangent_y = node.t[3];
      if (pt.turning) curve.turning_points.push_back(curve.points.size());
      curve.points.push_back(pt);
    }
  }
  assign_branches(curve);
  return curve;
}

// Bisection for the r at which q0 first reaches q_threshold at eta = 0.
double r_at_threshold(double alpha, double q_threshold, double lo, double hi, double tol,
                      ReducedSolution& last) {
  std::optional<ReducedPoint> init;
  while (hi - lo > tol * hi) {
    const double mid = 0.5 * (lo + hi);
    try {
      const ReducedSolution s = solve_reduced({alpha, mid, 0.0}, init);
      if (s.q0 >= q_threshold) {
        hi = mid;
      } else {
        lo = mid;
        init = point_of(s);
        last = s;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InfeasibleRegion && e.kind() != ErrorKind::NoConvergence) throw;
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

BoundaryEstimate phase_boundary_at(double alpha, double tol) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
  BoundaryEstimate est;
  const double thresholds[3] = {1e6, 1e7, 1e8};
  double lo = 1e-6;
  for (int k = 0; k < 3; ++k) {
    est.r_at_threshold[k] = r_at_threshold(alpha, thresholds[k], lo, 1.0, tol, est.last);
    lo = est.r_at_threshold[k] * (1.0 - 10.0 * tol);
  }
  const double d1 = est.r_at_threshold[1] - est.r_at_threshold[0];
  const double d2 = est.r_at_threshold[2] - est.r_at_threshold[1];
  est.r_c = est.r_at_threshold[2];
  // Aitken's delta-squared; skipped when the differences are at the bisection noise level.
  const double noise = 4.0 * tol * est.r_c;
  if (d1 > noise && d2 > noise && d2 < d1) {
    const double correction = d2 * d2 / (d1 - d2);
    est.r_c += std::min(correction, 10.0 * d2);
  }
  // The extrapolation cannot pass the first r where no finite q0 exists
  // (q0 beyond the overflow guard counts as no finite q0).
  if (est.r_c > est.r_at_threshold[2]) {
    double lo = est.r_at_threshold[2];
    double hi = est.r_c;
    auto feasible = [&](double r) {
      try {
        solve_reduced({alpha, r, 0.0}, point_of(est.last));
        return true;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::InfeasibleRegion && e.kind() != ErrorKind::NoConvergence) throw;
        return false;
      }
    };
    if (!feasible(hi)) {
      while (hi - lo > 0.25 * tol * hi) {
        const double mid = 0.5 * (lo + hi);
        (feasible(mid) ? lo : hi) = mid;
      }
      est.r_c = lo;
    }
  }
  return est;
}

CurveResult trace_phase_boundary(Interval alpha_range, double tol) {
  CurveSpec spec;
  spec.kind = CurveKind::phase_boundary;
  spec.range = alpha_range;
  spec.tolerance = tol;
  validate(spec);

  CurveResult curve;
  curve.spec = spec;
  const double top = std::min(alpha_range.hi, 1.0 - kAlphaResolution);
  if (alpha_range.hi > top) {
    curve.complete = false;
    curve.truncation = ErrorKind::TruncatedNearOne;
    curve.truncation_reason = "alpha closer to 1 than the resolution limit 5e-4";
  }
  if (top < alpha_range.lo) return curve;

  std::vector<double> grid;
  for (double a = alpha_range.lo; a < top; a += 0.02) grid.push_back(a);
  for (double gap = 0.1; gap >= kAlphaResolution * 0.999; gap /= std::sqrt(10.0)) {
    if (1.0 - gap > alpha_range.lo && 1.0 - gap < top) grid.push_back(1.0 - gap);
  }
  grid.push_back(top);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end(),
                         [](double x, double y) { return std::abs(x - y) < 1e-9; }),
             grid.end());

  std::vector<std::pair<double, BoundaryEstimate>> est;
  for (double a : grid) est.emplace_back(a, phase_boundary_at(a, tol));
  // Refine where the boundary moves quickly.
  for (int depth = 0; depth < 4; ++depth) {
    std::vector<std::pair<double, BoundaryEstimate>> refined;
    bool changed = false;
    for (std::size_t i = 0; i < est.size(); ++i) {
      refined.push_back(est[i]);
      if (i + 1 < est.size() && std::abs(est[i + 1].second.r_c - est[i].second.r_c) > 0.02) {
        const double mid = 0.5 * (est[i].first + est[i + 1].first);
        refined.emplace_back(mid, phase_boundary_at(mid, tol));
        changed = true;
      }
    }
    est.swap(refined);
    if (!changed) break;
  }
  for (const auto& [a, e] : est) {
    CurvePoint pt;
    pt.x = a;
    pt.r = e.r_c;
    pt.solution = e.last;
    pt.branch = BranchLabel::boundary;
    curve.points.push_back(pt);
  }
  return curve;
}

CurveResult trace_iso_q0(double level_sqrt_q0, double eta, Interval alpha_range) {
  CurveSpec spec;
  spec.kind = CurveKind::iso_q0;
  spec.level = level_sqrt_q0;
  spec.fixed.eta = eta;
  spec.range = alpha_range;
  return trace(spec);
}

CurveResult trace_iso_delta(double level_delta, double eta, Interval alpha_range) {
  CurveSpec spec;
  spec.kind = CurveKind::iso_delta;
  spec.level = level_delta;
  spec.fixed.eta = eta;
  spec.range = alpha_range;
  return trace(spec);
}

CurveResult trace_r_of_eta(double alpha, double level_sqrt_q0, Interval eta_range) {
  CurveSpec spec;
  spec.kind = CurveKind::r_of_eta;
  spec.level = level_sqrt_q0;
  spec.fixed.alpha = alpha;
  spec.range = eta_range;
  spec.max_step = 0.1;
  return trace(spec);
}

CurveResult trace(const CurveSpec& spec) {
  if (spec.kind == CurveKind::phase_boundary) {
    CurveResult c = trace_phase_boundary(spec.range, spec.tolerance);
    c.spec = spec;
    return c;
  }
  return trace_level_set(spec);
}

namespace {

// r where |d log r / d log eta| crosses 0.5 along one branch, in order of increasing eta.
std::optional<double> slope_crossing(std::vector<const CurvePoint*> pts) {
  std::sort(pts.begin(), pts.end(), [](auto* a, auto* b) { return a->x < b->x; });
  auto slope = [](const CurvePoint* p) {
    return p->tangent_x != 0.0 ? std::abs(p->tangent_y / p->tangent_x)
                               : std::numeric_limits<double>::infinity();
  };
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double s0 = slope(pts[i]) - 0.5;
    const double s1 = slope(pts[i + 1]) - 0.5;
    if (s0 == 0.0) return pts[i]->r;
    if ((s0 < 0.0) != (s1 < 0.0)) {
      const double theta = std::isfinite(s1) ? s0 / (s0 - s1) : 0.0;
      const double log_r = std::log(pts[i]->r) + theta * (std::log(pts[i + 1]->r) - std::log(pts[i]->r));
      return std::exp(log_r);
    }
  }
  return std::nullopt;
}

}  // namespace

TransitionZone transition_zone(const CurveResult& curve) {
  if (curve.spec.kind != CurveKind::r_of_eta || curve.turning_points.empty()) {
    fail(ErrorKind::NoTurningPoint, "needs an r_of_eta curve with a turning point");
  }
  TransitionZone z;
  const CurvePoint& turn = curve.points[curve.turning_points.front()];
  z.eta_turn = turn.x;
  z.r_turn = turn.r;
  std::vector<const CurvePoint*> lower, upper;
  for (const auto& p : curve.points) {
    if (p.branch == BranchLabel::lower) lower.push_back(&p);
    if (p.branch == BranchLabel::upper) upper.push_back(&p);
  }
  z.r_lower_crossing = slope_crossing(lower);
  z.r_upper_crossing = slope_crossing(upper);
  z.upper_min_slope = std::numeric_limits<double>::infinity();
  for (const CurvePoint* p : upper) {
    if (p->tangent_x == 0.0) continue;
    const double s = std::abs(p->tangent_y / p->tangent_x);
    if (s < z.upper_min_slope) {
      z.upper_min_slope = s;
      z.r_at_upper_min_slope = p->r;
    }
  }
  return z;
}

double transition_width(const CurveResult& curve) {
  const TransitionZone z = transition_zone(curve);
  if (!z.r_lower_crossing || !z.r_upper_crossing) {
    fail(ErrorKind::NoSlopeCrossing, "a branch never reaches log-log slope magnitude 0.5");
  }
  return *z.r_upper_crossing / *z.r_lower_crossing;
}

}  // namespace replica_es
