#include "continuation.hpp"

#include <algorithm>
#include <cmath>

#include "replica_es/errors.hpp"

namespace replica_es::detail {

std::pair<ProblemParams, ScaledPoint> PlaneProblem::unpack(const Vec4& u) const {
  ProblemParams p = fixed;
  ScaledPoint x;
  x.c = std::exp(u[0]);
  x.b = u[1];
  p.r = std::exp(u[3]);
  if (mode == PlaneMode::r_of_eta) {
    p.eta = std::exp(u[2]);
  } else {
    p.alpha = u[2];
  }
  x.sigma = mode == PlaneMode::iso_delta ? level / x.c : level;
  return {p, x};
}

Vec4 PlaneProblem::pack(const ProblemParams& p, const ScaledPoint& x) const {
  const double sweep = mode == PlaneMode::r_of_eta ? std::log(p.eta) : p.alpha;
  return {std::log(x.c), x.b, sweep, std::log(p.r)};
}

double PlaneProblem::report_x(const Vec4& u) const {
  return mode == PlaneMode::r_of_eta ? std::exp(u[2]) : u[2];
}

bool PlaneProblem::evaluate(const Vec4& u, Eigen::Vector3d& f, Eigen::Matrix<double, 3, 4>& j) const {
  if (!u.allFinite()) return false;
  const auto [p, x] = unpack(u);
  if (!(p.alpha > 0.0 && p.alpha < 1.0) || !(x.sigma > 0.0) || !(x.c > 0.0)) return false;
  ReducedEval ev;
  try {
    ev = evaluate_scaled(x, p, true);
  } catch (const Error&) {
    return false;
  }
  f = ev.residual;
  j.col(0) = ev.jacobian.col(kC) * x.c;
  if (mode == PlaneMode::iso_delta) j.col(0) -= ev.jacobian.col(kSigma) * x.sigma;
  j.col(1) = ev.jacobian.col(kB);
  j.col(2) = mode == PlaneMode::r_of_eta ? Eigen::Vector3d(ev.jacobian.col(kEta) * p.eta)
                                         : Eigen::Vector3d(ev.jacobian.col(kAlpha));
  j.col(3) = ev.jacobian.col(kR) * p.r;
  return f.allFinite() && j.allFinite();
}

namespace {

// Null vector of a 3x4 matrix by signed 3x3 minors.
Vec4 null_vector(const Eigen::Matrix<double, 3, 4>& j) {
  Vec4 t;
  for (int k = 0; k < 4; ++k) {
    Eigen::Matrix3d m;
    int col = 0;
    for (int i = 0; i < 4; ++i) {
      if (i != k) m.col(col++) = j.col(i);
    }
    t[k] = ((k % 2) ? -1.0 : 1.0) * m.determinant();
  }
  return t;
}

Vec4 plane_normalized(Vec4 t) {
  const double plane = std::hypot(t[2], t[3]);
  const double full = t.norm();
  if (!(full > 0.0)) return t;
  return t / (plane > 1e-10 * full ? plane : full);
}

double plane_distance(const Vec4& a, const Vec4& b) { return std::hypot(a[2] - b[2], a[3] - b[3]); }

struct Corrected {
  bool ok = false;
  Vec4 u;
  Vec4 t;
  int iterations = 0;
};

// Newton on [F(u); n . (u - anchor) - offset] where n is a fixed row.
Corrected newton_with_constraint(const PlaneProblem& pb, Vec4 u, const Vec4& n, const Vec4& anchor) {
  Corrected out;
  Eigen::Vector3d f;
  Eigen::Matrix<double, 3, 4> j;
  for (int it = 0; it < 15; ++it) {
    if (!pb.evaluate(u, f, j)) return out;
    const auto [p, x] = pb.unpack(u);
    const Eigen::Vector3d scaled = f.cwiseQuotient(residual_scale(x, p));
    const double g = n.dot(u - anchor);
    if (scaled.cwiseAbs().maxCoeff() <= 1e-12 && std::abs(g) <= 1e-12) {
      out.ok = true;
      out.u = u;
      out.iterations = it;
      out.t = plane_normalized(null_vector(j));
      return out;
    }
    Eigen::Matrix4d a;
    a.topRows<3>() = j;
    a.row(3) = n.transpose();
    Eigen::Vector4d rhs;
    rhs << -f, -g;
    const Vec4 du = a.fullPivLu().solve(rhs);
    if (!du.allFinite()) return out;
    u += du;
    if (du.cwiseAbs().maxCoeff() < 1e-15 * (1.0 + u.cwiseAbs().maxCoeff())) {
      if (!pb.evaluate(u, f, j)) return out;
      out.ok = true;
      out.u = u;
      out.iterations = it + 1;
      out.t = plane_normalized(null_vector(j));
      return out;
    }
  }
  return out;
}

Corrected correct(const PlaneProblem& pb, const Vec4& predicted, const Vec4& t) {
  return newton_with_constraint(pb, predicted, t, predicted);
}

// Point on the curve with u[coord] = value, started between a and b.
Corrected clip_to(const PlaneProblem& pb, const Vec4& a, const Vec4& b, int coord, double value) {
  const double span = b[coord] - a[coord];
  const double theta = span != 0.0 ? std::clamp((value - a[coord]) / span, 0.0, 1.0) : 1.0;
  Vec4 start = a + theta * (b - a);
  start[coord] = value;
  Vec4 n = Vec4::Zero();
  n[coord] = 1.0;
  Vec4 anchor = Vec4::Zero();
  anchor[coord] = value;
  return newton_with_constraint(pb, start, n, anchor);
}

// Locates the zero of the swept tangent component between two accepted nodes.
TraceNode refine_turning(const PlaneProblem& pb, const TraceNode& from, double h) {
  double lo = 0.0;
  double hi = h;
  const double sign0 = from.t[2];
  TraceNode best{from.u, from.t, true};
  for (int k = 0; k < 60 && hi - lo > 1e-13 * h; ++k) {
    const double s = 0.5 * (lo + hi);
    const Corrected c = correct(pb, from.u + s * from.t, from.t);
    if (!c.ok) break;
    Vec4 t = c.t;
    if (t.dot(from.t) < 0.0) t = -t;
    best = {c.u, t, true};
    if (t[2] * sign0 > 0.0) {
      lo = s;
    } else {
      hi = s;
    }
  }
  return best;
}

TraceOutcome march(const PlaneProblem& pb, const TraceNode& start, const TraceLimits& lim) {
  TraceOutcome out;
  Vec4 u = start.u;
  Vec4 t = start.t;
  double h = 0.25 * lim.max_step;
  auto outside = [&](const Vec4& v, int& coord, double& bound) {
    if (v[2] < lim.x_range.lo) { coord = 2; bound = lim.x_range.lo; return true; }
    if (v[2] > lim.x_range.hi) { coord = 2; bound = lim.x_range.hi; return true; }
    if (v[3] < lim.log_r_window.lo) { coord = 3; bound = lim.log_r_window.lo; return true; }
    if (v[3] > lim.log_r_window.hi) { coord = 3; bound = lim.log_r_window.hi; return true; }
    return false;
  };
  while (out.nodes.size() < lim.max_points) {
    const Vec4 predicted = u + h * t;
    Corrected c = correct(pb, predicted, t);
    bool accept = c.ok && plane_distance(c.u, u) <= 1.5 * h;
    if (accept) {
      if (c.t.dot(t) < 0.0) c.t = -c.t;
      // A sharp change of direction means the corrector jumped; retry shorter.
      const double cosine = c.t.segment<2>(2).dot(t.segment<2>(2)) /
                            (c.t.segment<2>(2).norm() * t.segment<2>(2).norm());
      if (!(cosine > 0.8) && h > lim.min_step) accept = false;
    }
    if (!accept) {
      h *= 0.5;
      if (h < lim.min_step) {
        out.complete = false;
        out.reason = "continuation step fell below min_step";
        return out;
      }
      continue;
    }
    int coord = 0;
    double bound = 0.0;
    if (outside(c.u, coord, bound)) {
      const Corrected edge = clip_to(pb, u, c.u, coord, bound);
      if (edge.ok) {
        Vec4 te = edge.t;
        if (te.dot(t) < 0.0) te = -te;
        out.nodes.push_back({edge.u, te, false});
      }
      return out;
    }
    if (c.t[2] * t[2] < 0.0) out.nodes.push_back(refine_turning(pb, {u, t, false}, h));
    out.nodes.push_back({c.u, c.t, false});
    if (out.nodes.size() > 10 && plane_distance(c.u, start.u) < 0.5 * h) {
      out.reason = "curve closed on itself";
      return out;
    }
    u = c.u;
    t = c.t;
    if (c.iterations > 5) {
      h = std::max(0.5 * h, lim.min_step);
    } else if (c.iterations <= 2) {
      h = std::min(2.0 * h, lim.max_step);
    }
  }
  out.complete = false;
  out.reason = "max_points reached";
  return out;
}

}  // namespace

TraceOutcome trace_component(const PlaneProblem& pb, const Vec4& start, const TraceLimits& lim) {
  Eigen::Vector3d f;
  Eigen::Matrix<double, 3, 4> j;
  if (!pb.evaluate(start, f, j)) fail(ErrorKind::DomainError, "continuation start outside domain");
  const Vec4 t0 = plane_normalized(null_vector(j));
  const TraceOutcome fwd = march(pb, {start, t0, false}, lim);
  const TraceOutcome bwd = march(pb, {start, -t0, false}, lim);

  TraceOutcome out;
  for (auto it = bwd.nodes.rbegin(); it != bwd.nodes.rend(); ++it) {
    out.nodes.push_back({it->u, -it->t, it->turning});
  }
  out.nodes.push_back({start, t0, false});
  out.nodes.insert(out.nodes.end(), fwd.nodes.begin(), fwd.nodes.end());
  out.complete = fwd.complete && bwd.complete;
  out.reason = !fwd.complete ? fwd.reason : bwd.reason;
  return out;
}

}  // namespace replica_es::detail
