#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace replica_es {

enum class ErrorKind {
  InvalidArgument,
  DomainError,
  NonConvexPotential,
  InfeasibleLift,
  QuadratureFailure,
  NoConvergence,
  InfeasibleRegion,
  TruncatedNearOne,
  LevelUnreachable,
  NoTurningPoint,
  NoSlopeCrossing,
  Unbounded,
  ShiftTooLarge,
  AllUnbounded,
};

std::string_view to_string(ErrorKind kind) noexcept;

// All library failures are reported through this type; `kind()` is stable and
// is what the CLI maps onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::NonConvexPotential: return "NonConvexPotential";
    case ErrorKind::InfeasibleLift: return "InfeasibleLift";
    case ErrorKind::QuadratureFailure: return "QuadratureFailure";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::InfeasibleRegion: return "InfeasibleRegion";
    case ErrorKind::TruncatedNearOne: return "TruncatedNearOne";
    case ErrorKind::LevelUnreachable: return "LevelUnreachable";
    case ErrorKind::NoTurningPoint: return "NoTurningPoint";
    case ErrorKind::NoSlopeCrossing: return "NoSlopeCrossing";
    case ErrorKind::Unbounded: return "Unbounded";
    case ErrorKind::ShiftTooLarge: return "ShiftTooLarge";
    case ErrorKind::AllUnbounded: return "AllUnbounded";
  }
  return "Unknown";
}

}  // namespace replica_es
