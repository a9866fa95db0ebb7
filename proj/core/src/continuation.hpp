#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "replica_es/geometry.hpp"
#include "replica_es/reduced_system.hpp"

namespace replica_es::detail {

using Vec4 = Eigen::Vector4d;

enum class PlaneMode { iso_q0, iso_delta, r_of_eta };

// Level set of the reduced system in u = (log c, b, x, log r), where x is alpha
// (iso maps) or log eta (r_of_eta). The level equation is eliminated by fixing
// sigma = level (sqrt(q0) levels) or sigma = level / c (delta levels).
struct PlaneProblem {
  PlaneMode mode = PlaneMode::iso_q0;
  double level = 1.0;
  ProblemParams fixed{};

  std::pair<ProblemParams, ScaledPoint> unpack(const Vec4& u) const;
  Vec4 pack(const ProblemParams& p, const ScaledPoint& x) const;
  /// False if u is outside the domain of the residuals.
  bool evaluate(const Vec4& u, Eigen::Vector3d& f, Eigen::Matrix<double, 3, 4>& j) const;
  /// Swept coordinate as reported (alpha, or eta).
  double report_x(const Vec4& u) const;
};

struct TraceNode {
  Vec4 u;
  Vec4 t;  // tangent scaled to unit length in the (x, log r) plane
  bool turning = false;
};

struct TraceLimits {
  Interval x_range;       // in u coordinates
  Interval log_r_window;  // in u coordinates
  double max_step = 0.05;
  double min_step = 1e-6;
  std::size_t max_points = 20000;
};

struct TraceOutcome {
  std::vector<TraceNode> nodes;
  bool complete = true;
  std::string reason;
};

/// Pseudo-arclength continuation through `start` in both directions.
TraceOutcome trace_component(const PlaneProblem& problem, const Vec4& start, const TraceLimits& limits);

}  // namespace replica_es::detail
