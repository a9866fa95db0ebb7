#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "replica_es/errors.hpp"
#include "replica_es/saddle.hpp"

namespace replica_es {

enum class CurveKind { phase_boundary, iso_q0, iso_delta, r_of_eta };

std::string to_string(CurveKind kind);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct CurveSpec {
  CurveKind kind = CurveKind::iso_q0;
  /// Target sqrt(q0) (iso_q0, r_of_eta) or delta (iso_delta); unused for phase_boundary.
  double level = 0.0;
  /// eta for the (alpha, r) maps, alpha for r_of_eta.
  ProblemParams fixed{};
  /// Swept coordinate: alpha, or eta for r_of_eta.
  Interval range{};
  /// Step bounds in the plane (alpha, log r), or (log eta, log r) for r_of_eta.
  double max_step = 0.05;
  double min_step = 1e-6;
  /// Window for r; the tracer stops when a branch leaves it.
  Interval r_window{1e-4, 1e3};
  /// Relative bisection tolerance on r for the phase boundary.
  double tolerance = 1e-12;
  std::size_t max_points = 20000;
};

/// Throws InvalidArgument if the spec violates its invariants.
void validate(const CurveSpec& spec);

enum class BranchLabel { single, lower, middle, upper, boundary };

std::string to_string(BranchLabel label);

struct CurvePoint {
  /// Swept coordinate (alpha, or eta for r_of_eta) and r.
  double x = 0.0;
  double r = 0.0;
  ReducedSolution solution;
  BranchLabel branch = BranchLabel::single;
  bool turning = false;
  /// Connected piece of the level set this point belongs to.
  int component = 0;
  /// Unit tangent in the stepping plane; d log r / d log eta = tangent_y / tangent_x on r_of_eta.
  double tangent_x = 0.0;
  double tangent_y = 0.0;
};

struct CurveResult {
  CurveSpec spec;
  std::vector<CurvePoint> points;
  std::vector<std::size_t> turning_points;
  bool complete = true;
  std::optional<ErrorKind> truncation;
  std::string truncation_reason;
};

/// Dispatches on spec.kind. Throws LevelUnreachable when no point of the level set lies in range.
CurveResult trace(const CurveSpec& spec);

/// r_c(alpha) at eta = 0 from bisection at q0 thresholds 1e6, 1e7, 1e8 and extrapolation.
/// Points with 1 - alpha below 5e-4 are not attempted; the curve is then flagged TruncatedNearOne.
CurveResult trace_phase_boundary(Interval alpha_range, double tol = 1e-12);

/// Extrapolated boundary r_c at a single alpha, plus the three bisection values.
struct BoundaryEstimate {
  double r_c = 0.0;
  double r_at_threshold[3] = {0.0, 0.0, 0.0};
  ReducedSolution last;
};
BoundaryEstimate phase_boundary_at(double alpha, double tol = 1e-12);

CurveResult trace_iso_q0(double level_sqrt_q0, double eta, Interval alpha_range);
CurveResult trace_iso_delta(double level_delta, double eta, Interval alpha_range);
CurveResult trace_r_of_eta(double alpha, double level_sqrt_q0, Interval eta_range);

/// r_upper / r_lower between the points where the log-log slope magnitude of each branch
/// crosses 0.5. Throws NoTurningPoint, or NoSlopeCrossing if a branch never crosses 0.5.
double transition_width(const CurveResult& curve);

/// Shape summary of an r_of_eta curve used to report on the trade-off zone.
struct TransitionZone {
  double eta_turn = 0.0;
  double r_turn = 0.0;
  std::optional<double> r_lower_crossing;  // |slope| = 0.5 on the lower branch
  std::optional<double> r_upper_crossing;  // |slope| = 0.5 on the upper branch
  double upper_min_slope = 0.0;            // smallest |slope| on the upper branch
  double r_at_upper_min_slope = 0.0;
};
/// Throws NoTurningPoint.
TransitionZone transition_zone(const CurveResult& curve);

}  // namespace replica_es
