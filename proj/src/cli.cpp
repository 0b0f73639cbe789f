#include "qmoment/cli.hpp"

#include <omp.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "qmoment/problems.hpp"

namespace qmoment {

namespace {

constexpr double kPi = std::numbers::pi;

struct RunConfig {
  std::optional<std::string> problem, example, family, sigma, report, density_out, trace_out;
  SolveConfig solve;
  std::uint64_t seed = 0;
  int threads = 0;
  bool tau = false;
};

std::string resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_relative() ? (base / path).string() : p;
}

void load_config_file(const std::string& path, RunConfig& rc) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  Json j;
  try {
    j = Json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config file " + path + ": expected an object");
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  for (const auto& [key, value] : j.items()) {
    if (key == "problem") rc.problem = resolve(base, value.get<std::string>());
    else if (key == "example") rc.example = value.get<std::string>();
    else if (key == "family") rc.family = value.get<std::string>();
    else if (key == "sigma") rc.sigma = resolve(base, value.get<std::string>());
    else if (key == "report") rc.report = resolve(base, value.get<std::string>());
    else if (key == "density_out") rc.density_out = resolve(base, value.get<std::string>());
    else if (key == "trace_out") rc.trace_out = resolve(base, value.get<std::string>());
    else if (key == "tol") rc.solve.tol = value.get<double>();
    else if (key == "t_max") rc.solve.t_max = value.get<double>();
    else if (key == "torus_override") rc.solve.torus_override = value.get<bool>();
    else if (key == "newton_polish") rc.solve.newton_polish = value.get<bool>();
    else if (key == "seed") rc.seed = value.get<std::uint64_t>();
    else if (key == "threads") rc.threads = value.get<int>();
    else if (key == "tau") rc.tau = value.get<bool>();
    else throw std::invalid_argument("config file " + path + ": unknown key '" + key + "'");
  }
}

// Flags registered on a subcommand; applied over the config file afterwards.
struct Flags {
  std::string config, problem, example, family, sigma, report, density_out, trace_out;
  double tol = 0.0, t_max = 0.0;
  std::uint64_t seed = 0;
  int threads = 0;
  CLI::Option *o_config{}, *o_problem{}, *o_example{}, *o_family{}, *o_sigma{}, *o_report{}, *o_density{},
      *o_trace{}, *o_tol{}, *o_tmax{}, *o_seed{}, *o_threads{}, *o_torus{}, *o_tau{};

  void add(CLI::App* app, bool outputs) {
    o_config = app->add_option("--config", config, "JSON config file mirroring the flags");
    o_problem = app->add_option("--problem", problem, "problem JSON file");
    o_example = app->add_option("--example", example, "builtin example name");
    o_problem->excludes(o_example);
    o_family = app->add_option("--family", family,
                               "rational|exponential|weighted-rational|weighted-exponential|prior-exponential");
    o_sigma = app->add_option("--sigma", sigma, "weight density CSV for the weighted families");
    o_tol = app->add_option("--tol", tol, "convergence tolerance on V");
    o_tmax = app->add_option("--t-max", t_max, "integration time limit");
    o_torus = app->add_flag("--torus-override", "allow rational families on a 2-D support");
    o_tau = app->add_flag("--tau", "integrate the homotopy form over tau in [0, 1]");
    o_seed = app->add_option("--seed", seed, "seed for synthetic generators");
    o_threads = app->add_option("--threads", threads, "OpenMP thread count (0 = runtime default)");
    o_report = app->add_option("--report", report, "report JSON output path (stdout when absent)");
    if (outputs) {
      o_density = app->add_option("--density-out", density_out, "density CSV output path");
      o_trace = app->add_option("--trace-out", trace_out, "trace CSV output path");
    }
  }

  RunConfig resolve() const {
    RunConfig rc;
    if (o_config->count()) load_config_file(config, rc);
    if (o_problem->count()) {
      rc.problem = problem;
      rc.example.reset();
    }
    if (o_example->count()) {
      rc.example = example;
      rc.problem.reset();
    }
    if (o_family->count()) rc.family = family;
    if (o_sigma->count()) rc.sigma = sigma;
    if (o_report->count()) rc.report = report;
    if (o_density && o_density->count()) rc.density_out = density_out;
    if (o_trace && o_trace->count()) rc.trace_out = trace_out;
    if (o_tol->count()) rc.solve.tol = tol;
    if (o_tmax->count()) rc.solve.t_max = t_max;
    if (o_torus->count()) rc.solve.torus_override = true;
    if (o_tau->count()) rc.tau = true;
    if (o_seed->count()) rc.seed = seed;
    if (o_threads->count()) rc.threads = threads;
    if (!rc.problem && !rc.example) throw std::invalid_argument("one of --problem or --example is required");
    return rc;
  }
};

struct Loaded {
  Problem problem;
  std::string suggested_family;
};

Loaded load(const RunConfig& rc) {
  if (rc.example) {
    ExampleBundle b = make_example(*rc.example, rc.seed);
    return {std::move(b.problem), b.family};
  }
  return {load_problem(*rc.problem), "rational"};
}

struct Outcome {
  SolveReport report;
  std::string family;
  const SupportGrid* grid;
};

SolveReport run_solver(const RunConfig& rc, const Problem& p, const std::string& family_name_in) {
  std::optional<MatrixDensity> sigma;
  if (rc.sigma) sigma = read_density_csv(*rc.sigma, p.op.grid());
  const Family family = make_family(family_name_in, p.op, sigma);
  if (rc.threads > 0) omp_set_num_threads(rc.threads);
  return rc.tau ? solve_tau(p.op, p.moment, family, rc.solve) : solve(p.op, p.moment, family, rc.solve);
}

void emit_report(const RunConfig& rc, const SolveReport& report, const std::string& family, std::ostream& out) {
  const std::string text = report_to_json(report, family).dump(2) + "\n";
  if (rc.report)
    write_text(*rc.report, text);
  else
    out << text;
}

int exit_code_for(SolveStatus s) {
  if (s == SolveStatus::Converged) return kExitOk;
  if (s == SolveStatus::NotInRange) return kExitInputError;
  return kExitDiverged;
}

int cmd_solve(const Flags& flags, std::ostream& out, std::ostream& err) {
  const RunConfig rc = flags.resolve();
  const Loaded l = load(rc);
  const std::string family = rc.family.value_or(rc.example ? l.suggested_family : "rational");
  const SolveReport report = run_solver(rc, l.problem, family);
  emit_report(rc, report, family, out);
  if (rc.trace_out) write_trace_csv(*rc.trace_out, report.trace);
  if (rc.density_out && report.status == SolveStatus::Converged)
    write_density_csv(*rc.density_out, l.problem.op.grid(), report.density);
  if (report.status != SolveStatus::Converged)
    err << "solve: " << status_name(report.status) << (report.message.empty() ? "" : ": ") << report.message
        << "\n";
  return exit_code_for(report.status);
}

int cmd_feasibility(const Flags& flags, std::ostream& out, std::ostream& err) {
  const RunConfig rc = flags.resolve();
  const Loaded l = load(rc);
  const std::string family = rc.family.value_or("exponential");
  const SolveReport report = run_solver(rc, l.problem, family);
  if (rc.report) emit_report(rc, report, family, out);
  if (report.status == SolveStatus::NotInRange) {
    err << "feasibility: " << report.message << "\n";
    return kExitInputError;
  }
  const bool feasible = report.status == SolveStatus::Converged;
  out << (feasible ? "feasible" : "not-strictly-feasible") << " (family: " << family
      << ", status: " << status_name(report.status) << ")\n";
  return feasible ? kExitOk : kExitDiverged;
}

int cmd_example(const std::string& name, const std::string& dir, std::uint64_t seed, std::ostream& out) {
  ExampleBundle b = make_example(name, seed);
  const std::filesystem::path base(dir);
  std::filesystem::create_directories(base);
  if (b.rho_true) {
    b.problem.rho_true = "rho_true.csv";
    write_density_csv((base / "rho_true.csv").string(), b.problem.op.grid(), *b.rho_true);
  }
  write_text((base / "problem.json").string(), problem_to_json(b.problem).dump(2) + "\n");
  const Json config{{"problem", "problem.json"}, {"family", b.family}, {"seed", seed}};
  write_text((base / "config.json").string(), config.dump(2) + "\n");
  out << "wrote " << name << " bundle to " << base.string() << "\n";
  return kExitOk;
}

Problem bundle_problem(MomentOperator op, const MatrixDensity& rho, Json grid_spec, Json kernel_spec) {
  ComplexMatrix moment = op.apply(rho);
  return Problem{std::move(op), std::move(moment), std::move(grid_spec), std::move(kernel_spec), std::nullopt};
}

}  // namespace

const std::vector<std::string>& example_names() {
  static const std::vector<std::string> names{"nonequispaced-array", "grid2d", "bell", "statecov", "scalar-demo"};
  return names;
}

ExampleBundle make_example(const std::string& name, std::uint64_t seed) {
  if (name == "scalar-demo") {
    SupportGrid grid = build_grid(GridKind::Interval1d, {{0.0, 1.0}}, 4, 5);
    const MatrixDensity rho = synth_density(DensitySpec::constant(2.0), grid);
    Json gs = grid_to_json(grid);
    return {bundle_problem(scalar_problem(grid), rho, gs, Json{{"mode", "builtin"}, {"name", "scalar"}}), rho,
            "rational"};
  }
  if (name == "nonequispaced-array") {
    const ArraySpec spec = ArraySpec::standard();
    const MatrixDensity rho = synth_density(figure_density(), spec.grid);
    Json ks{{"mode", "builtin"},
            {"name", "nonequispaced-array"},
            {"params", {{"positions", spec.positions}, {"wavenumber", spec.wavenumber}}}};
    return {bundle_problem(nonequispaced_array_problem(spec), rho, grid_to_json(spec.grid), ks), rho, "rational"};
  }
  if (name == "grid2d") {
    SupportGrid grid = build_grid(GridKind::Rectangle2d, {{0.0, kPi}, {0.0, kPi}}, 16, 5);
    UniformStream rng(seed);
    DensitySpec spec;
    spec.profile.baseline = 0.2;
    spec.profile.bumps = {{{rng.next(0.8, 1.2), rng.next(1.8, 2.2)}, {0.4, 0.5}, 1.0},
                          {{rng.next(2.0, 2.4), rng.next(0.6, 1.0)}, {0.3, 0.3}, 0.6}};
    const MatrixDensity rho = synth_density(spec, grid);
    Json ks{{"mode", "builtin"}, {"name", "grid2d"}, {"params", {{"n", 2}}}};
    return {bundle_problem(grid2d_problem(2, grid), rho, grid_to_json(grid), ks), rho, "exponential"};
  }
  if (name == "bell") {
    MomentOperator op = partial_trace_problem(2, 2);
    const MatrixDensity rho = MatrixDensity::constant(2, bell_state());
    Json gs = grid_to_json(op.grid());
    Json ks{{"mode", "builtin"}, {"name", "partial-trace"}, {"params", {{"d_a", 2}, {"d_b", 2}}}};
    return {bundle_problem(std::move(op), rho, gs, ks), rho, "exponential"};
  }
  if (name == "statecov") {
    const StateSpaceModel model = random_state_model(4, 2, seed);
    SupportGrid grid = build_grid(GridKind::Interval1d, {{-kPi, kPi}}, 64, 5);
    DensitySpec spec;
    spec.profile.baseline = 1.0;
    spec.profile.bumps = {{{0.5}, {0.6}, 0.8}};
    spec.m = 2;
    spec.congruence = 0.5;
    spec.seed = seed + 1;
    const MatrixDensity rho = synth_density(spec, grid);
    Json ks{{"mode", "builtin"},
            {"name", "state-covariance"},
            {"params", {{"A", matrix_to_json(model.A)}, {"B", matrix_to_json(model.B)}}}};
    return {bundle_problem(state_cov_problem(model, grid), rho, grid_to_json(grid), ks), rho, "rational"};
  }
  std::ostringstream os;
  os << "unknown example '" << name << "'; valid names:";
  for (const std::string& n : example_names()) os << ' ' << n;
  throw std::invalid_argument(os.str());
}

Family make_family(const std::string& name, const MomentOperator& op, const std::optional<MatrixDensity>& sigma) {
  auto weight = [&]() {
    return sigma ? *sigma : MatrixDensity::constant(op.node_count(), HermitianMatrix::identity(op.m()));
  };
  if (name == "rational") return RationalFamily{};
  if (name == "exponential") return ExponentialFamily{};
  if (name == "weighted-rational") return WeightedRationalFamily::from_sigma(weight());
  if (name == "weighted-exponential") return WeightedExponentialFamily{weight()};
  if (name == "prior-exponential") return PriorExponentialFamily{weight()};
  throw std::invalid_argument("unknown family '" + name +
                              "' (rational, exponential, weighted-rational, weighted-exponential, prior-exponential)");
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Matricial moment problems by entropy homotopy"};
  app.require_subcommand(1);
  Flags solve_flags, feas_flags;
  CLI::App* solve_cmd = app.add_subcommand("solve", "solve R = L(rho) within an entropy family");
  solve_flags.add(solve_cmd, true);
  CLI::App* feas_cmd = app.add_subcommand("feasibility", "decide strict feasibility by solver convergence");
  feas_flags.add(feas_cmd, false);
  CLI::App* ex_cmd = app.add_subcommand("example", "write a builtin problem bundle");
  std::string ex_name, ex_dir = ".";
  std::uint64_t ex_seed = 0;
  ex_cmd->add_option("name", ex_name, "example name")->required();
  ex_cmd->add_option("--out-dir", ex_dir, "output directory");
  ex_cmd->add_option("--seed", ex_seed, "seed for synthetic generators");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitInputError;
  }

  try {
    if (*solve_cmd) return cmd_solve(solve_flags, out, err);
    if (*feas_cmd) return cmd_feasibility(feas_flags, out, err);
    return cmd_example(ex_name, ex_dir, ex_seed, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }
}

}  // namespace qmoment
