#include "replica_es/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <iterator>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <utility>

#include <openssl/evp.h>
#include <spdlog/spdlog.h>
#include <tbb/info.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include "json.hpp"
#include "replica_es/errors.hpp"

namespace replica_es::io {

namespace {

using nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// Non-finite values become null in JSON.
ordered_json json_real(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(); }

std::vector<std::string> curve_row(const CurvePoint& p, CurveKind kind) {
  const bool boundary = p.branch == BranchLabel::boundary;
  const auto& s = p.solution;
  const double alpha = kind == CurveKind::r_of_eta ? s.params.alpha : p.x;
  const double eta = kind == CurveKind::r_of_eta ? p.x : s.params.eta;
  return {format_real(alpha),
          format_real(p.r),
          format_real(boundary ? 0.0 : eta),
          format_real(boundary ? kInf : s.q0),
          format_real(boundary ? kInf : s.delta),
          format_real(boundary ? kNaN : s.epsilon),
          format_real(boundary ? kNaN : s.es_in_sample),
          to_string(p.branch),
          format_real(boundary ? kNaN : s.residual_norm),
          p.turning ? "1" : "0",
          std::to_string(p.component)};
}

ordered_json spec_json(const CurveSpec& spec) {
  ordered_json j;
  j["kind"] = to_string(spec.kind);
  if (spec.kind != CurveKind::phase_boundary) j["level"] = spec.level;
  if (spec.kind == CurveKind::r_of_eta) {
    j["alpha"] = spec.fixed.alpha;
  } else if (spec.kind != CurveKind::phase_boundary) {
    j["eta"] = spec.fixed.eta;
  }
  j["range"] = {spec.range.lo, spec.range.hi};
  j["r_window"] = {spec.r_window.lo, spec.r_window.hi};
  j["max_step"] = spec.max_step;
  j["min_step"] = spec.min_step;
  j["tolerance"] = spec.tolerance;
  return j;
}

void write_header_comment(std::ostream& out, const CurveSpec& spec, const std::string& status) {
  out << "# status=" << status << '\n';
  out << "# spec=" << spec_json(spec).dump() << '\n';
}

void write_csv_line(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
  out << '\n';
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

double parse_real(const std::string& cell) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size()) {
    fail(ErrorKind::InvalidArgument, "malformed number '" + cell + "'");
  }
  return v;
}

struct McRow {
  std::string quantity;
  Estimate estimate;
  std::optional<double> replica;
};

std::vector<McRow> mc_rows(const MCSummary& s, const std::optional<ReducedSolution>& replica) {
  auto value = [&](auto f) { return replica ? std::optional<double>(f(*replica)) : std::nullopt; };
  return {
      {"q0", s.q0_hat, value([](const ReducedSolution& r) { return r.q0; })},
      {"delta", s.delta_hat, value([](const ReducedSolution& r) { return r.delta; })},
      {"epsilon", s.eps_hat, value([](const ReducedSolution& r) { return r.epsilon; })},
      {"es_in", s.es_in_hat, value([](const ReducedSolution& r) { return r.es_cvar_in_sample; })},
      {"es_out_ratio", s.es_out_ratio,
       value([](const ReducedSolution& r) { return std::sqrt(r.q0); })},
  };
}

double z_score(const Estimate& e, double replica) {
  return e.se > 0.0 ? (e.mean - replica) / e.se : kNaN;
}

ordered_json mc_config_json(const MCConfig& c) {
  return ordered_json{{"n_assets", c.n_assets}, {"n_obs", c.n_obs},     {"alpha", c.alpha},
                      {"eta", c.eta},           {"n_samples", c.n_samples}, {"seed", c.seed},
                      {"shift_xi", c.shift_xi}};
}

CurveSpec iso_spec(CurveKind kind, double level, double eta) {
  CurveSpec s;
  s.kind = kind;
  s.level = level;
  s.fixed.eta = eta;
  s.range = {0.6, 0.995};
  return s;
}

std::string level_tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

void add_family(FigureRecipe& recipe, CurveKind kind, const std::vector<double>& levels,
                double eta) {
  const std::string prefix = kind == CurveKind::iso_q0 ? "iso_q0_level_" : "iso_delta_level_";
  for (double level : levels) {
    recipe.curves.push_back(
        {prefix + level_tag(level) + "_eta_" + level_tag(eta) + ".csv", iso_spec(kind, level, eta)});
  }
}

}  // namespace

Format parse_format(std::string_view name) {
  if (name == "csv") return Format::csv;
  if (name == "json") return Format::json;
  fail(ErrorKind::InvalidArgument, "format must be csv or json");
}

std::string_view code_version() noexcept { return REPLICA_ES_VERSION; }

std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", value);
  return buf;
}

void write_solution(std::ostream& out, const ReducedSolution& s, Format format) {
  const std::vector<std::pair<std::string, double>> fields = {
      {"alpha", s.params.alpha},
      {"r", s.params.r},
      {"eta", s.params.eta},
      {"q0", s.q0},
      {"rel_error", s.rel_error},
      {"delta", s.delta},
      {"epsilon", s.epsilon},
      {"free_energy", s.free_energy},
      {"es_in", s.es_in_sample},
      {"es_cvar", s.es_cvar_in_sample},
      {"residual_norm", s.residual_norm}};
  if (format == Format::json) {
    ordered_json j;
    for (const auto& [k, v] : fields) j[k] = json_real(v);
    out << j.dump(2) << '\n';
    return;
  }
  std::vector<std::string> names, values;
  for (const auto& [k, v] : fields) {
    names.push_back(k);
    values.push_back(format_real(v));
  }
  write_csv_line(out, names);
  write_csv_line(out, values);
}

std::string curve_status(const CurveResult& curve) {
  if (curve.complete) return "complete";
  return "truncated:" +
         std::string(to_string(curve.truncation.value_or(ErrorKind::NoConvergence)));
}

void write_curve(std::ostream& out, const CurveResult& curve, Format format) {
  const std::string status = curve_status(curve);
  if (format == Format::json) {
    ordered_json j;
    j["status"] = status;
    if (!curve.truncation_reason.empty()) j["reason"] = curve.truncation_reason;
    j["spec"] = spec_json(curve.spec);
    ordered_json rows = ordered_json::array();
    for (const auto& p : curve.points) {
      const auto cells = curve_row(p, curve.spec.kind);
      ordered_json row;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const std::string name(kCurveColumns[i]);
        if (name == "branch_label") {
          row[name] = cells[i];
        } else if (name == "turning") {
          row[name] = p.turning;
        } else if (name == "component") {
          row[name] = p.component;
        } else {
          row[name] = json_real(std::strtod(cells[i].c_str(), nullptr));
        }
      }
      rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    out << j.dump(2) << '\n';
    return;
  }
  write_header_comment(out, curve.spec, status);
  write_csv_line(out, std::vector<std::string>(std::begin(kCurveColumns), std::end(kCurveColumns)));
  for (const auto& p : curve.points) write_csv_line(out, curve_row(p, curve.spec.kind));
}

void write_curve_failure(std::ostream& out, const CurveSpec& spec, ErrorKind kind,
                         Format format) {
  const std::string status = "error:" + std::string(to_string(kind));
  if (format == Format::json) {
    ordered_json j;
    j["status"] = status;
    j["spec"] = spec_json(spec);
    j["rows"] = ordered_json::array();
    out << j.dump(2) << '\n';
    return;
  }
  write_header_comment(out, spec, status);
  write_csv_line(out, std::vector<std::string>(std::begin(kCurveColumns), std::end(kCurveColumns)));
}

CurveTable read_curve_csv(std::istream& in) {
  CurveTable table;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (line.rfind("# status=", 0) == 0) table.status = line.substr(9);
      continue;
    }
    const auto cells = split(line);
    if (cells.size() != std::size(kCurveColumns)) {
      fail(ErrorKind::InvalidArgument, "curve row has " + std::to_string(cells.size()) + " cells");
    }
    if (!header_seen) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] != kCurveColumns[i]) fail(ErrorKind::InvalidArgument, "unexpected curve header");
      }
      header_seen = true;
      continue;
    }
    CurveRow row;
    row.alpha = parse_real(cells[0]);
    row.r = parse_real(cells[1]);
    row.eta = parse_real(cells[2]);
    row.q0 = parse_real(cells[3]);
    row.delta = parse_real(cells[4]);
    row.epsilon = parse_real(cells[5]);
    row.es_in = parse_real(cells[6]);
    row.branch_label = cells[7];
    row.residual_norm = parse_real(cells[8]);
    row.turning = cells[9] == "1";
    row.component = static_cast<int>(parse_real(cells[10]));
    table.rows.push_back(std::move(row));
  }
  if (!header_seen) fail(ErrorKind::InvalidArgument, "missing curve header");
  return table;
}

void write_mc(std::ostream& out, const MCSummary& s, const std::optional<ReducedSolution>& replica,
              Format format) {
  const auto rows = mc_rows(s, replica);
  if (format == Format::json) {
    ordered_json j;
    j["config"] = mc_config_json(s.config);
    j["feasible_fraction"] = s.feasible_fraction;
    j["shift_mismatch_fraction"] = s.shift_mismatch_fraction;
    j["max_ratio_identity_error"] = s.max_ratio_identity_error;
    ordered_json arr = ordered_json::array();
    for (const auto& row : rows) {
      ordered_json r{{"quantity", row.quantity},
                     {"mean", json_real(row.estimate.mean)},
                     {"se", json_real(row.estimate.se)},
                     {"count", row.estimate.count}};
      if (row.replica) {
        r["replica"] = json_real(*row.replica);
        r["z"] = json_real(z_score(row.estimate, *row.replica));
      }
      arr.push_back(std::move(r));
    }
    j["estimates"] = std::move(arr);
    out << j.dump(2) << '\n';
    return;
  }
  out << "# config=" << mc_config_json(s.config).dump() << '\n';
  out << "# feasible_fraction=" << format_real(s.feasible_fraction) << '\n';
  out << "# shift_mismatch_fraction=" << format_real(s.shift_mismatch_fraction) << '\n';
  out << "# max_ratio_identity_error=" << format_real(s.max_ratio_identity_error) << '\n';
  std::vector<std::string> header = {"quantity", "mean", "se", "count"};
  if (replica) {
    header.emplace_back("replica");
    header.emplace_back("z");
  }
  write_csv_line(out, header);
  for (const auto& row : rows) {
    std::vector<std::string> cells = {row.quantity, format_real(row.estimate.mean),
                                      format_real(row.estimate.se),
                                      std::to_string(row.estimate.count)};
    if (row.replica) {
      cells.push_back(format_real(*row.replica));
      cells.push_back(format_real(z_score(row.estimate, *row.replica)));
    }
    write_csv_line(out, cells);
  }
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::InvalidArgument, "SHA-256 digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < length; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::InvalidArgument, "cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

std::vector<std::string> figure_ids() {
  return {"fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"};
}

FigureRecipe figure_recipe(std::string_view id) {
  FigureRecipe r;
  r.id = std::string(id);
  const std::vector<double> q0_levels = {1.05, 1.1, 1.25, 1.5, 2.0};
  if (id == "fig1") {
    r.description = "phase boundary r_c(alpha) of the unregularized problem";
    CurveSpec s;
    s.kind = CurveKind::phase_boundary;
    s.range = {0.6, 0.999};
    r.curves.push_back({"phase_boundary.csv", s});
  } else if (id == "fig2") {
    r.description = "iso-sqrt(q0) contours at eta = 0";
    add_family(r, CurveKind::iso_q0, {1.05, 1.1, 1.25, 1.5, 2.0, 3.0}, 0.0);
    r.notes.push_back("contour levels chosen by the recipe");
  } else if (id == "fig3" || id == "fig4") {
    const double eta = id == "fig3" ? 0.01 : 0.05;
    r.description = "iso-sqrt(q0) contours at eta = " + level_tag(eta);
    add_family(r, CurveKind::iso_q0, q0_levels, eta);
    r.notes.push_back("contour levels chosen by the recipe");
  } else if (id == "fig5") {
    r.description = "iso-delta contours at eta = 0";
    add_family(r, CurveKind::iso_delta, {0.25, 0.5, 1.0, 2.0, 4.0}, 0.0);
    r.notes.push_back("contour levels chosen by the recipe");
  } else if (id == "fig6") {
    r.description = "delta = 1 contour for a family of eta";
    for (double eta : {0.01, 0.03, 0.1, 0.3}) add_family(r, CurveKind::iso_delta, {1.0}, eta);
    r.notes.push_back("eta family {0.01, 0.03, 0.1, 0.3} chosen by the recipe");
  } else if (id == "fig7") {
    r.description = "iso-delta contours at eta = 0.3";
    add_family(r, CurveKind::iso_delta, {0.5, 0.75, 1.0, 1.25, 1.5}, 0.3);
    r.notes.push_back("contour levels chosen by the recipe; delta < 1/(2 eta) bounds them");
  } else if (id == "fig8") {
    r.description = "r versus eta at alpha = 0.975 for fixed sqrt(q0)";
    for (double level : {1.01, 1.05, 1.10}) {
      CurveSpec s;
      s.kind = CurveKind::r_of_eta;
      s.level = level;
      s.fixed.alpha = 0.975;
      s.range = {1e-4, 10.0};
      s.max_step = 0.1;
      r.curves.push_back({"r_of_eta_level_" + level_tag(level) + ".csv", s});
    }
    r.notes.push_back("eta range [1e-4, 10] chosen by the recipe");
  } else {
    fail(ErrorKind::InvalidArgument, "unknown figure id '" + std::string(id) + "'");
  }
  return r;
}

FigureReport run_figure(const FigureRecipe& recipe, const std::filesystem::path& directory,
                        int workers) {
  if (workers < 0) fail(ErrorKind::InvalidArgument, "workers must be >= 0");
  std::filesystem::create_directories(directory);
  const std::size_t count = recipe.curves.size();
  std::vector<std::optional<CurveResult>> results(count);
  std::vector<std::optional<ErrorKind>> errors(count);
  const int available = tbb::info::default_concurrency();
  tbb::task_arena arena(workers > 0 ? std::min(workers, available) : available);
  arena.execute([&] {
    tbb::parallel_for(std::size_t{0}, count, [&](std::size_t i) {
      try {
        results[i] = trace(recipe.curves[i].spec);
      } catch (const Error& e) {
        errors[i] = e.kind();
      }
    });
  });

  FigureReport report;
  report.id = recipe.id;
  ordered_json files = ordered_json::array();
  for (std::size_t i = 0; i < count; ++i) {
    const auto& curve = recipe.curves[i];
    const auto path = directory / curve.file;
    {
      std::ofstream out(path, std::ios::binary);
      if (results[i]) {
        write_curve(out, *results[i], Format::csv);
      } else {
        write_curve_failure(out, curve.spec, *errors[i], Format::csv);
      }
      if (!out) fail(ErrorKind::InvalidArgument, "cannot write " + path.string());
    }
    FigureFile f;
    f.file = curve.file;
    f.spec = curve.spec;
    f.sha256 = sha256_file(path);
    f.status = results[i] ? curve_status(*results[i])
                          : "error:" + std::string(to_string(*errors[i]));
    f.rows = results[i] ? results[i]->points.size() : 0;
    spdlog::debug("{}: {} {} with {} rows", recipe.id, f.file, f.status, f.rows);
    if (f.status != "complete") {
      report.partial = true;
      spdlog::warn("{}: {} is {}", recipe.id, f.file, f.status);
    }
    files.push_back(ordered_json{{"file", f.file},
                                 {"sha256", f.sha256},
                                 {"status", f.status},
                                 {"rows", f.rows},
                                 {"spec", spec_json(f.spec)}});
    report.files.push_back(std::move(f));
  }

  ordered_json manifest;
  manifest["schema"] = "replica_es.figure_manifest/1";
  manifest["figure"] = recipe.id;
  manifest["description"] = recipe.description;
  manifest["code_version"] = code_version();
  manifest["partial"] = report.partial;
  manifest["notes"] = recipe.notes;
  manifest["files"] = std::move(files);
  report.manifest = directory / "manifest.json";
  std::ofstream out(report.manifest, std::ios::binary);
  out << manifest.dump(2) << '\n';
  if (!out) fail(ErrorKind::InvalidArgument, "cannot write " + report.manifest.string());
  return report;
}

}  // namespace replica_es::io
