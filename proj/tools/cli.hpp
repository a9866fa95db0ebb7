#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace replica_es::cli {

/// Process exit codes; every error class has a fixed code.
enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kNoConvergence = 3,
  kInfeasibleRegion = 4,
  kLevelUnreachable = 5,
  kAllUnbounded = 6,
  kOtherError = 7,
  kPartialFigure = 8,
  kShiftTooLarge = 9,
};

/// Runs one command line (args excludes the program name). Data goes to `out` unless
/// --output names a file; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace replica_es::cli
