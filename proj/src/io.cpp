#include "qmoment/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qmoment/problems.hpp"

namespace qmoment {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  return f;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

double parse_double(const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin) throw std::invalid_argument("density CSV: cannot parse number '" + s + "'");
  return v;
}

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

GridKind kind_from_name(const std::string& name) {
  if (name == "interval1d") return GridKind::Interval1d;
  if (name == "rectangle2d") return GridKind::Rectangle2d;
  if (name == "discrete") return GridKind::Discrete;
  throw std::invalid_argument("grid: unknown kind '" + name + "' (interval1d, rectangle2d, discrete)");
}

const char* kind_name(GridKind k) {
  switch (k) {
    case GridKind::Interval1d: return "interval1d";
    case GridKind::Rectangle2d: return "rectangle2d";
    case GridKind::Discrete: return "discrete";
  }
  return "discrete";
}

std::vector<Bounds> bounds_from_json(const Json& j) {
  std::vector<Bounds> out;
  for (const Json& b : j) {
    if (!b.is_array() || b.size() != 2) throw std::invalid_argument("grid: bounds must be [lower, upper] pairs");
    out.push_back({b[0].get<double>(), b[1].get<double>()});
  }
  return out;
}

std::vector<ComplexMatrix> matrices_from_json(const Json& j) {
  std::vector<ComplexMatrix> out;
  for (const Json& m : j) out.push_back(matrix_from_json(m));
  return out;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f = open_out(path);
  f << text;
}

// ----------------------------------------------------------------- matrices

Json matrix_to_json(const ComplexMatrix& m) {
  Json data = Json::array();
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) data.push_back(Json::array({m(r, c).real(), m(r, c).imag()}));
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

ComplexMatrix matrix_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
    throw std::invalid_argument("matrix JSON needs rows, cols and data");
  const Index rows = j.at("rows").get<Index>(), cols = j.at("cols").get<Index>();
  const Json& data = j.at("data");
  if (rows <= 0 || cols <= 0) throw DimensionError("matrix JSON: dimensions must be positive");
  if (!data.is_array() || static_cast<Index>(data.size()) != rows * cols)
    throw DimensionError("matrix JSON: data length does not match rows * cols");
  ComplexMatrix m(rows, cols);
  for (Index k = 0; k < rows * cols; ++k) {
    const Json& e = data[static_cast<std::size_t>(k)];
    if (!e.is_array() || e.size() != 2) throw std::invalid_argument("matrix JSON: entries must be [re, im]");
    m(k / cols, k % cols) = Complex(e[0].get<double>(), e[1].get<double>());
  }
  if (!m.allFinite()) throw NumericalError("matrix JSON: non-finite entry");
  return m;
}

// ------------------------------------------------------------------ problems

SupportGrid grid_from_json(const Json& j) {
  const GridKind kind = kind_from_name(j.at("kind").get<std::string>());
  if (j.contains("weights")) {
    std::vector<double> coords;
    for (const Json& n : j.at("nodes")) {
      if (n.is_array())
        for (const Json& c : n) coords.push_back(c.get<double>());
      else
        coords.push_back(n.get<double>());
    }
    return SupportGrid::from_samples(kind, j.contains("bounds") ? bounds_from_json(j.at("bounds")) : std::vector<Bounds>{},
                                     std::move(coords), j.at("weights").get<std::vector<double>>());
  }
  if (kind == GridKind::Discrete) {
    const long count = j.at("count").get<long>();
    if (count < 1) throw std::invalid_argument("grid: count must be >= 1");
    return SupportGrid::discrete(static_cast<std::size_t>(count));
  }
  return build_grid(kind, bounds_from_json(j.at("bounds")), j.value("panels", 32), j.value("order", 5));
}

Json grid_to_json(const SupportGrid& grid) {
  Json j{{"kind", kind_name(grid.kind())}};
  if (grid.kind() != GridKind::Discrete && grid.panels() > 0) {
    Json b = Json::array();
    for (const Bounds& x : grid.bounds()) b.push_back(Json::array({x.lower, x.upper}));
    j["bounds"] = std::move(b);
    j["panels"] = grid.panels();
    j["order"] = grid.order();
    return j;
  }
  bool unit = true;
  for (std::size_t i = 0; i < grid.size(); ++i)
    unit = unit && grid.weight(i) == 1.0 && grid.node(i)[0] == static_cast<double>(i);
  if (grid.kind() == GridKind::Discrete && unit) {
    j["count"] = grid.size();
    return j;
  }
  Json nodes = Json::array();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto t = grid.node(i);
    nodes.push_back(t.size() == 1 ? Json(t[0]) : Json(std::vector<double>(t.begin(), t.end())));
  }
  Json b = Json::array();
  for (const Bounds& x : grid.bounds()) b.push_back(Json::array({x.lower, x.upper}));
  j["bounds"] = std::move(b);
  j["nodes"] = std::move(nodes);
  j["weights"] = grid.weights();
  return j;
}

MomentOperator operator_from_json(const Json& k, const SupportGrid& grid) {
  const std::string mode = k.value("mode", "builtin");
  if (mode == "samples") {
    std::vector<ComplexMatrix> left = matrices_from_json(k.at("left"));
    if (!k.contains("right")) return MomentOperator(grid, KernelSamples::symmetric(std::move(left)));
    return MomentOperator(grid, KernelSamples(std::move(left), matrices_from_json(k.at("right"))));
  }
  if (mode != "builtin") throw std::invalid_argument("kernels: mode must be 'builtin' or 'samples'");
  const std::string name = k.at("name").get<std::string>();
  const Json params = k.value("params", Json::object());
  if (name == "nonequispaced-array") {
    ArraySpec spec;
    spec.positions = params.value("positions", ArraySpec::default_positions());
    spec.wavenumber = params.value("wavenumber", 1.0);
    spec.grid = grid;
    return nonequispaced_array_problem(spec);
  }
  if (name == "grid2d") return grid2d_problem(params.value("n", 2), grid);
  if (name == "partial-trace") {
    const int d_a = params.value("d_a", 2), d_b = params.value("d_b", 2);
    if (grid.kind() != GridKind::Discrete || grid.size() != static_cast<std::size_t>(d_b))
      throw std::invalid_argument("partial-trace kernels need a discrete grid with d_b nodes");
    return partial_trace_problem(d_a, d_b);
  }
  if (name == "state-covariance") {
    StateSpaceModel model{matrix_from_json(params.at("A")), matrix_from_json(params.at("B")), std::nullopt};
    if (params.contains("C_o")) model.C_o = matrix_from_json(params.at("C_o"));
    return state_cov_problem(model, grid);
  }
  if (name == "identity") {
    const Index m = params.value("m", 1);
    if (m < 1) throw std::invalid_argument("identity kernels: m must be >= 1");
    return MomentOperator(grid, KernelSamples::symmetric(std::vector<ComplexMatrix>(grid.size(), ComplexMatrix::Identity(m, m))));
  }
  if (name == "scalar") return scalar_problem(grid);
  throw std::invalid_argument("kernels: unknown builtin '" + name +
                              "' (nonequispaced-array, grid2d, partial-trace, state-covariance, identity, scalar)");
}

Problem problem_from_json(const Json& j) {
  for (const char* key : {"grid", "kernels", "moment"})
    if (!j.contains(key)) throw std::invalid_argument(std::string("problem file: missing '") + key + "'");
  SupportGrid grid = grid_from_json(j.at("grid"));
  MomentOperator op = operator_from_json(j.at("kernels"), grid);
  ComplexMatrix moment = matrix_from_json(j.at("moment"));
  if (moment.rows() != op.n_left() || moment.cols() != op.n_right())
    throw DimensionError("problem file: moment shape does not match the kernels");
  Problem p{std::move(op), std::move(moment), j.at("grid"), j.at("kernels"), std::nullopt};
  if (j.contains("rho_true") && !j.at("rho_true").is_null()) p.rho_true = j.at("rho_true").get<std::string>();
  return p;
}

Json problem_to_json(const Problem& p) {
  Json j{{"grid", p.grid_spec}, {"kernels", p.kernel_spec}, {"moment", matrix_to_json(p.moment)}};
  if (p.rho_true) j["rho_true"] = *p.rho_true;
  return j;
}

Problem load_problem(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open problem file " + path);
  Json j;
  try {
    j = Json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("problem file " + path + ": " + e.what());
  }
  Problem p = problem_from_json(j);
  if (p.rho_true && std::filesystem::path(*p.rho_true).is_relative())
    p.rho_true = (std::filesystem::path(path).parent_path() / *p.rho_true).string();
  return p;
}

// ---------------------------------------------------------------------- CSV

void write_density_csv(std::ostream& out, const SupportGrid& grid, const MatrixDensity& rho) {
  if (rho.size() != grid.size()) throw DimensionError("density CSV: density does not match grid");
  const Index m = rho.dim();
  if (grid.kind() == GridKind::Discrete) {
    out << "index";
  } else if (grid.coord_dim() == 1) {
    out << "t";
  } else {
    out << "t1,t2";
  }
  for (Index r = 0; r < m; ++r)
    for (Index c = 0; c < m; ++c) out << ",rho_" << r << '_' << c << "_re,rho_" << r << '_' << c << "_im";
  out << '\n';
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const auto t = grid.node(j);
    for (std::size_t a = 0; a < t.size(); ++a) out << (a ? "," : "") << format_double(t[a]);
    for (Index r = 0; r < m; ++r)
      for (Index c = 0; c < m; ++c)
        out << ',' << format_double(rho[j](r, c).real()) << ',' << format_double(rho[j](r, c).imag());
    out << '\n';
  }
}

void write_density_csv(const std::string& path, const SupportGrid& grid, const MatrixDensity& rho) {
  std::ofstream f = open_out(path);
  write_density_csv(f, grid, rho);
}

MatrixDensity read_density_csv(const std::string& path, const SupportGrid& grid) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open density file " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::invalid_argument("density CSV " + path + ": empty file");
  const std::vector<std::string> header = split_csv(line);
  std::size_t ncoord = 0;
  while (ncoord < header.size() && header[ncoord].rfind("rho_", 0) != 0) ++ncoord;
  const std::size_t nvalues = header.size() - ncoord;
  const Index m = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(nvalues) / 2.0)));
  if (m < 1 || static_cast<std::size_t>(2 * m * m) != nvalues)
    throw std::invalid_argument("density CSV " + path + ": header does not describe a square matrix density");
  if (ncoord != static_cast<std::size_t>(grid.coord_dim()))
    throw DimensionError("density CSV " + path + ": coordinate columns do not match the grid");

  MatrixDensity rho;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != header.size()) throw std::invalid_argument("density CSV " + path + ": ragged row");
    const std::size_t j = rho.size();
    if (j >= grid.size()) throw DimensionError("density CSV " + path + ": more rows than grid nodes");
    const auto t = grid.node(j);
    for (std::size_t a = 0; a < ncoord; ++a)
      if (std::abs(parse_double(cells[a]) - t[a]) > 1e-12 * std::max(1.0, std::abs(t[a])))
        throw DimensionError("density CSV " + path + ": node coordinates do not match the grid");
    ComplexMatrix s(m, m);
    for (Index k = 0; k < m * m; ++k)
      s(k / m, k % m) = Complex(parse_double(cells[ncoord + 2 * k]), parse_double(cells[ncoord + 2 * k + 1]));
    rho.samples.emplace_back(s);
  }
  if (rho.size() != grid.size()) throw DimensionError("density CSV " + path + ": fewer rows than grid nodes");
  return rho;
}

void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace) {
  out << "t,V,min_eig,lambda_norm\n";
  for (const TracePoint& p : trace)
    out << format_double(p.t) << ',' << format_double(p.V) << ',' << format_double(p.min_eig) << ','
        << format_double(p.lambda_norm) << '\n';
}

void write_trace_csv(const std::string& path, const std::vector<TracePoint>& trace) {
  std::ofstream f = open_out(path);
  write_trace_csv(f, trace);
}

// ------------------------------------------------------------------- report

Json report_to_json(const SolveReport& r, const std::string& family) {
  Json j;
  j["status"] = status_name(r.status);
  j["lambda"] = r.lambda_hat.matrix.size() > 0 ? matrix_to_json(r.lambda_hat.matrix) : Json(nullptr);
  j["V_final"] = number_or_null(r.V_final);
  j["entropy"] = number_or_null(r.entropy_value);
  j["fitted_V_slope"] = number_or_null(r.fitted_V_slope);
  j["iterations"] = r.iterations;
  Json coords = Json::array();
  for (Index i = 0; i < r.lambda_hat.coords.size(); ++i) coords.push_back(r.lambda_hat.coords(i));
  j["diagnostics"] = Json{{"family", family},
                          {"lambda_coords", std::move(coords)},
                          {"rejected_steps", r.rejected_steps},
                          {"newton_iterations", r.newton_iterations},
                          {"burg_entropy", number_or_null(r.burg_entropy)},
                          {"vonneumann_entropy", number_or_null(r.vonneumann_entropy)},
                          {"duality_pairing", number_or_null(r.duality_pairing)},
                          {"range_residual", number_or_null(r.range_residual)},
                          {"final_time", r.trace.empty() ? Json(nullptr) : Json(r.trace.back().t)},
                          {"message", r.message}};
  return j;
}

}  // namespace qmoment
