#pragma once

// Serialization: complex matrices as JSON, problem files, density and trace
// CSV files, and solve reports.

#include <iosfwd>
#include <optional>
#include <string>

#include "json.hpp"
#include "qmoment/homotopy.hpp"

namespace qmoment {

using Json = nlohmann::ordered_json;

/// {"rows": r, "cols": c, "data": [[re, im], ...]} in row-major order.
Json matrix_to_json(const ComplexMatrix& m);
ComplexMatrix matrix_from_json(const Json& j);

/// A moment problem: operator, target moment, and the grid and kernel JSON it was built from.
struct Problem {
  MomentOperator op;
  ComplexMatrix moment;
  Json grid_spec;
  Json kernel_spec;
  std::optional<std::string> rho_true;  // density CSV path, relative to the problem file
};

SupportGrid grid_from_json(const Json& j);
Json grid_to_json(const SupportGrid& grid);
/// Builds kernels from {"mode": "builtin", "name": ..., "params": {...}} or
/// {"mode": "samples", "left": [...], "right": [...]} on the given grid.
MomentOperator operator_from_json(const Json& kernels, const SupportGrid& grid);

Problem problem_from_json(const Json& j);
Json problem_to_json(const Problem& p);
Problem load_problem(const std::string& path);

/// Header: coordinate columns (t | t1,t2 | index), then rho_<r>_<c>_re and
/// rho_<r>_<c>_im per entry in row-major order. Values use 17 significant digits.
void write_density_csv(std::ostream& out, const SupportGrid& grid, const MatrixDensity& rho);
void write_density_csv(const std::string& path, const SupportGrid& grid, const MatrixDensity& rho);
/// Reads a density CSV; the node count and coordinates must match grid to 1e-12.
MatrixDensity read_density_csv(const std::string& path, const SupportGrid& grid);

/// Columns t, V, min_eig, lambda_norm.
void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace);
void write_trace_csv(const std::string& path, const std::vector<TracePoint>& trace);

Json report_to_json(const SolveReport& report, const std::string& family);

/// %.17g, with "nan"/"inf" spelled out.
std::string format_double(double v);

void write_text(const std::string& path, const std::string& text);

}  // namespace qmoment
