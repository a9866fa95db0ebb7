#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "replica_es/geometry.hpp"
#include "replica_es/mc_oracle.hpp"
#include "replica_es/saddle.hpp"

namespace replica_es::io {

enum class Format { csv, json };

/// Throws Error{InvalidArgument} for anything but "csv" or "json".
Format parse_format(std::string_view name);

/// Library version string embedded in manifests.
std::string_view code_version() noexcept;

/// Scientific notation with 17 significant digits; "inf", "-inf" and "nan" for non-finite values.
std::string format_real(double value);

/// Column order of curve tables. Rows sharing `component` form one connected polyline.
inline constexpr std::string_view kCurveColumns[] = {
    "alpha", "r",            "eta",           "q0",      "delta",    "epsilon",
    "es_in", "branch_label", "residual_norm", "turning", "component"};

void write_solution(std::ostream& out, const ReducedSolution& sol, Format format);

/// Status line written before the data: "complete", "truncated:<ErrorKind>" or
/// "error:<ErrorKind>".
std::string curve_status(const CurveResult& curve);

/// One row per point in continuation order. Phase-boundary rows carry r = r_c with
/// q0 = delta = inf and nan for the remaining solution fields.
void write_curve(std::ostream& out, const CurveResult& curve, Format format);

/// Header and status only; used when a trace fails before producing points.
void write_curve_failure(std::ostream& out, const CurveSpec& spec, ErrorKind kind,
                         Format format);

struct CurveRow {
  double alpha = 0.0;
  double r = 0.0;
  double eta = 0.0;
  double q0 = 0.0;
  double delta = 0.0;
  double epsilon = 0.0;
  double es_in = 0.0;
  std::string branch_label;
  double residual_norm = 0.0;
  bool turning = false;
  int component = 0;
};

struct CurveTable {
  std::string status;
  std::vector<CurveRow> rows;
};

/// Parses the CSV written by write_curve. Throws Error{InvalidArgument} on malformed input.
CurveTable read_curve_csv(std::istream& in);

/// MC summary with one row per estimated quantity; replica values and z-scores are added
/// when `replica` is set.
void write_mc(std::ostream& out, const MCSummary& summary,
              const std::optional<ReducedSolution>& replica, Format format);

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

struct FigureCurve {
  std::string file;  // file name inside the figure directory
  CurveSpec spec;
};

struct FigureRecipe {
  std::string id;
  std::string description;
  std::vector<FigureCurve> curves;
  std::vector<std::string> notes;  // parameter choices not fixed by the figure caption
};

/// ids "fig1" .. "fig8".
std::vector<std::string> figure_ids();

/// Throws Error{InvalidArgument} for an unknown id.
FigureRecipe figure_recipe(std::string_view id);

struct FigureFile {
  std::string file;
  std::string sha256;
  std::string status;
  std::size_t rows = 0;
  CurveSpec spec;
};

struct FigureReport {
  std::string id;
  std::vector<FigureFile> files;
  bool partial = false;  // some curve truncated or failed
  std::filesystem::path manifest;
};

/// Traces every curve of the recipe (concurrently, `workers` = 0 for all processors), writes
/// one CSV per curve and manifest.json into `directory`.
FigureReport run_figure(const FigureRecipe& recipe, const std::filesystem::path& directory,
                        int workers = 0);

}  // namespace replica_es::io
