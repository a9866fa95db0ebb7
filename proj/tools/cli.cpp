#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "replica_es/errors.hpp"
#include "replica_es/geometry.hpp"
#include "replica_es/io.hpp"
#include "replica_es/mc_oracle.hpp"
#include "replica_es/saddle.hpp"

namespace replica_es::cli {

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::DomainError: return kUsage;
    case ErrorKind::NoConvergence: return kNoConvergence;
    case ErrorKind::InfeasibleRegion: return kInfeasibleRegion;
    case ErrorKind::LevelUnreachable: return kLevelUnreachable;
    case ErrorKind::AllUnbounded: return kAllUnbounded;
    case ErrorKind::ShiftTooLarge: return kShiftTooLarge;
    default: return kOtherError;
  }
}

// Routes library logging to `err` for the lifetime of one run.
class LoggingScope {
 public:
  explicit LoggingScope(std::ostream& err) : previous_(spdlog::default_logger()) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    auto logger = std::make_shared<spdlog::logger>("replica_es", sink);
    logger->set_pattern("[%l] %v");
    const char* level = std::getenv("REPLICA_ES_LOG");
    logger->set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
    spdlog::set_default_logger(logger);
  }
  ~LoggingScope() { spdlog::set_default_logger(previous_); }
  LoggingScope(const LoggingScope&) = delete;
  LoggingScope& operator=(const LoggingScope&) = delete;

 private:
  std::shared_ptr<spdlog::logger> previous_;
};

struct OutputOptions {
  std::string path;
  std::string format = "csv";

  void add_to(CLI::App& app) {
    app.add_option("--output", path, "Output file (default: standard output)");
    app.add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  }
};

// Writes through `emit` to the file named in `opts` or to `out`.
void emit_to(const OutputOptions& opts, std::ostream& out,
             const std::function<void(std::ostream&)>& emit) {
  if (opts.path.empty()) {
    emit(out);
    return;
  }
  std::ofstream file(opts.path, std::ios::binary);
  if (!file) fail(ErrorKind::InvalidArgument, "cannot open " + opts.path);
  emit(file);
}

struct SolveCommand {
  ProblemParams p;
  OutputOptions output;

  void add_to(CLI::App& app) {
    app.add_option("--alpha", p.alpha, "Confidence level in (0, 1)")->required();
    app.add_option("--r", p.r, "Aspect ratio N/T > 0")->required();
    app.add_option("--eta", p.eta, "Ridge amplitude >= 0")->default_val(0.0);
    output.add_to(app);
  }

  int run(std::ostream& out) const {
    validate(p);
    const auto sol = solve_reduced(p);
    const auto format = io::parse_format(output.format);
    emit_to(output, out, [&](std::ostream& os) { io::write_solution(os, sol, format); });
    return kOk;
  }
};

struct CurveCommand {
  std::string kind;
  double level = 0.0;
  double eta = 0.0;
  double alpha = 0.975;
  Interval alpha_range{0.6, 0.995};
  Interval eta_range{1e-4, 10.0};
  std::optional<double> max_step;
  double min_step = 1e-6;
  Interval r_window{1e-4, 1e3};
  double tolerance = 1e-12;
  OutputOptions output;

  void add_to(CLI::App& app) {
    app.add_option("kind", kind, "Curve family")
        ->required()
        ->check(CLI::IsMember({"iso-q0", "iso-delta", "r-of-eta", "phase-boundary"}));
    app.add_option("--level", level, "sqrt(q0) for iso-q0 and r-of-eta, delta for iso-delta");
    app.add_option("--eta", eta, "Fixed eta of the (alpha, r) maps");
    app.add_option("--alpha", alpha, "Fixed alpha of r-of-eta");
    app.add_option("--alpha-min", alpha_range.lo, "Lower end of the alpha sweep");
    app.add_option("--alpha-max", alpha_range.hi, "Upper end of the alpha sweep");
    app.add_option("--eta-min", eta_range.lo, "Lower end of the r-of-eta sweep");
    app.add_option("--eta-max", eta_range.hi, "Upper end of the r-of-eta sweep");
    app.add_option("--max-step", max_step, "Largest continuation step");
    app.add_option("--min-step", min_step, "Smallest continuation step");
    app.add_option("--r-min", r_window.lo, "Lower edge of the r window");
    app.add_option("--r-max", r_window.hi, "Upper edge of the r window");
    app.add_option("--tolerance", tolerance, "Relative bisection tolerance for the boundary");
    output.add_to(app);
  }

  CurveSpec spec() const {
    CurveSpec s;
    s.min_step = min_step;
    s.r_window = r_window;
    s.tolerance = tolerance;
    s.level = level;
    if (kind == "phase-boundary") {
      s.kind = CurveKind::phase_boundary;
      s.range = alpha_range;
      s.level = 0.0;
    } else if (kind == "r-of-eta") {
      s.kind = CurveKind::r_of_eta;
      s.fixed.alpha = alpha;
      s.range = eta_range;
      s.max_step = 0.1;
    } else {
      s.kind = kind == "iso-q0" ? CurveKind::iso_q0 : CurveKind::iso_delta;
      s.fixed.eta = eta;
      s.range = alpha_range;
    }
    if (max_step) s.max_step = *max_step;
    return s;
  }

  int run(std::ostream& out) const {
    const CurveSpec s = spec();
    validate(s);
    const auto format = io::parse_format(output.format);
    try {
      const CurveResult curve = trace(s);
      emit_to(output, out, [&](std::ostream& os) { io::write_curve(os, curve, format); });
      return kOk;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::InvalidArgument) throw;
      emit_to(output, out,
              [&](std::ostream& os) { io::write_curve_failure(os, s, e.kind(), format); });
      throw;
    }
  }
};

struct McCommand {
  MCConfig cfg;
  bool compare = false;
  OutputOptions output;

  void add_to(CLI::App& app) {
    app.add_option("--n-assets", cfg.n_assets, "Number of assets N")->default_val(cfg.n_assets);
    app.add_option("--n-obs", cfg.n_obs, "Number of observations T")->default_val(cfg.n_obs);
    app.add_option("--alpha", cfg.alpha, "Confidence level")->default_val(cfg.alpha);
    app.add_option("--eta", cfg.eta, "Ridge amplitude")->default_val(cfg.eta);
    app.add_option("--samples", cfg.n_samples, "Replications")->default_val(cfg.n_samples);
    app.add_option("--seed", cfg.seed, "Random seed")->default_val(cfg.seed);
    app.add_option("--shift", cfg.shift_xi, "Return shift for the susceptibility")
        ->default_val(cfg.shift_xi);
    app.add_option("--workers", cfg.workers, "Worker threads (0: all processors)")
        ->default_val(cfg.workers);
    app.add_flag("--compare", compare, "Add replica values and z-scores");
    output.add_to(app);
  }

  int run(std::ostream& out) const {
    validate(cfg);
    const auto format = io::parse_format(output.format);
    std::optional<ReducedSolution> replica;
    if (compare) {
      replica = solve_reduced(
          {cfg.alpha, static_cast<double>(cfg.n_assets) / cfg.n_obs, cfg.eta});
    }
    const MCSummary summary = estimate_summary(cfg);
    emit_to(output, out, [&](std::ostream& os) { io::write_mc(os, summary, replica, format); });
    return kOk;
  }
};

struct FigureCommand {
  std::string id;
  std::string directory;
  int workers = 0;

  void add_to(CLI::App& app) {
    app.add_option("id", id, "Figure id")->required()->check(CLI::IsMember(io::figure_ids()));
    app.add_option("--output", directory, "Output directory")->required();
    app.add_option("--workers", workers, "Worker threads (0: all processors)");
  }

  int run(std::ostream& out) const {
    const auto report = io::run_figure(io::figure_recipe(id), directory, workers);
    for (const auto& f : report.files) out << f.file << ' ' << f.status << ' ' << f.rows << '\n';
    out << report.manifest.string() << '\n';
    return report.partial ? kPartialFigure : kOk;
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const LoggingScope logging(err);
  CLI::App app{"Large-N replica solution of ridge-regularized Expected Shortfall optimization"};
  app.require_subcommand(1);
  SolveCommand solve;
  CurveCommand curve;
  McCommand mc;
  FigureCommand figure;
  solve.add_to(*app.add_subcommand("solve", "Solve the reduced saddle-point system"));
  curve.add_to(*app.add_subcommand("curve", "Trace a curve in the parameter plane"));
  mc.add_to(*app.add_subcommand("mc", "Monte Carlo estimates from the finite program"));
  figure.add_to(*app.add_subcommand("figure", "Write every curve of a figure"));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (app.got_subcommand("solve")) return solve.run(out);
    if (app.got_subcommand("curve")) return curve.run(out);
    if (app.got_subcommand("mc")) return mc.run(out);
    return figure.run(out);
  } catch (const Error& e) {
    err << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << e.what() << '\n';
    return kOtherError;
  }
}

}  // namespace replica_es::cli
