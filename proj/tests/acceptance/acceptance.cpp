// One PASS/FAIL line per acceptance criterion; exit status 0 iff all pass.
// With a 1-based index argument only that criterion runs.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>

#include <unistd.h>

#include "qmoment/cli.hpp"
#include "support.hpp"

using namespace qmoment;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Detail {
 public:
  template <class T>
  Detail& operator()(const std::string& key, const T& v) {
    if (!os_.str().empty()) os_ << ", ";
    os_ << key << "=" << v;
    return *this;
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

MomentOperator array_op() { return nonequispaced_array_problem(ArraySpec::standard()); }

// Start with L*(lambda0) = 1 on the array.
DualVariable array_start(const MomentOperator& op) {
  return op.dual_from_matrix(ComplexMatrix::Identity(3, 3) / 3.0);
}

// Feasible duals near the array start.
std::vector<DualVariable> feasible_duals(const MomentOperator& op, UniformStream& rng, int count) {
  std::vector<DualVariable> out;
  const DualVariable base = array_start(op);
  while (static_cast<int>(out.size()) < count) {
    RealVector c = base.coords * rng.next(0.5, 3.0);
    for (Index i = 0; i < c.size(); ++i) c(i) += rng.next(-0.05, 0.05);
    DualVariable lam = op.dual(c);
    if (is_dual_feasible(op, lam).feasible) out.push_back(std::move(lam));
  }
  return out;
}

double moment_residual(const MomentOperator& op, const MatrixDensity& rho, const ComplexMatrix& R) {
  return (op.apply(rho) - R).norm() / R.norm();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli_binary(const std::string& args) {
  const std::string cmd = std::string("\"") + QMOMENT_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("qmoment_acceptance_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

// ---------------------------------------------------------------------------

Outcome matrix_calculus() {
  const auto t0 = std::chrono::steady_clock::now();
  UniformStream rng(1001);
  const double eps = 1e-5;
  double fd_exp = 0.0, fd_log = 0.0, round_trip = 0.0, trace_id = 0.0;
  for (int k = 0; k < 50; ++k) {
    const HermitianMatrix a = qtest::random_hermitian(rng, 4, rng.next(0.5, 2.0));
    const HermitianMatrix d = qtest::random_hermitian(rng, 4, 1.0);
    const ComplexMatrix fe = frechet_exp(a, d).matrix();
    const ComplexMatrix ce = (matrix_exp(a + eps * d).matrix() - matrix_exp(a - eps * d).matrix()) / (2 * eps);
    fd_exp = std::max(fd_exp, qtest::rel_err(ce, fe));

    const HermitianMatrix p = matrix_exp(a);
    const ComplexMatrix fl = frechet_log(p, d).matrix();
    const ComplexMatrix cl = (matrix_log(p + eps * d).matrix() - matrix_log(p - eps * d).matrix()) / (2 * eps);
    fd_log = std::max(fd_log, qtest::rel_err(cl, fl));

    const HermitianMatrix x = scrambled_divide(p, d);
    round_trip = std::max(round_trip, qtest::rel_err(scrambled_multiply(p, x).matrix(), d.matrix()));
    const double lhs = (p.matrix() * x.matrix()).trace().real();
    trace_id = std::max(trace_id, std::abs(lhs - d.trace()) / std::max(1.0, std::abs(d.trace())));
  }
  const double secs = seconds_since(t0);
  return {fd_exp <= 1e-6 && fd_log <= 1e-6 && round_trip <= 1e-10 && trace_id <= 1e-10 && secs < 5.0,
          Detail()("fd_exp", fd_exp)("fd_log", fd_log)("round_trip", round_trip)("trace_identity", trace_id)(
              "seconds", secs)
              .str()};
}

Outcome bell_partial_trace() {
  const MomentOperator op = partial_trace_problem(2, 2);
  const double err =
      (op.apply(MatrixDensity::constant(2, bell_state())) - 0.5 * ComplexMatrix::Identity(2, 2)).cwiseAbs().maxCoeff();
  return {err <= 1e-14, Detail()("max_abs_error", err).str()};
}

Outcome duality_pairing() {
  const MomentOperator op = array_op();
  UniformStream rng(1003);
  const double expected = static_cast<double>(op.m()) * op.grid().measure();
  double worst = 0.0;
  for (const DualVariable& lam : feasible_duals(op, rng, 20))
    worst = std::max(worst, std::abs(inner(lam.matrix, h_map(op, lam, RationalFamily{})) - expected) / expected);
  return {worst <= 1e-10, Detail()("samples", 20)("max_rel_error", worst).str()};
}

Outcome jacobian_validity() {
  const MomentOperator op = array_op();
  UniformStream rng(1004);
  double asym = 0.0, fd = 0.0;
  for (const DualVariable& lam : feasible_duals(op, rng, 5)) {
    for (const Family& fam : {Family{RationalFamily{}}, Family{ExponentialFamily{}}}) {
      const RealMatrix J = jacobian(op, lam, fam).J;
      asym = std::max(asym, (J - J.transpose()).norm() / J.norm());
      fd = std::max(fd, qtest::max_column_rel_err(qtest::fd_jacobian(op, lam, fam), J));
    }
  }
  return {asym <= 1e-10 && fd <= 1e-6, Detail()("max_asymmetry", asym)("max_fd_rel_error", fd).str()};
}

Outcome recovery() {
  const MomentOperator op = array_op();
  const ComplexMatrix R = op.apply(synth_density(figure_density(), op.grid()));
  const DualVariable start = array_start(op);
  bool ok = true;
  Detail d;
  for (const auto& [name, fam] : {std::pair{"rational", Family{RationalFamily{}}},
                                  std::pair{"exponential", Family{ExponentialFamily{}}}}) {
    const auto t0 = std::chrono::steady_clock::now();
    const SolveReport rep = solve(op, R, fam, {}, start);
    const double secs = seconds_since(t0);
    const bool conv = rep.status == SolveStatus::Converged;
    const double res = conv ? moment_residual(op, rep.density, R) : INFINITY;
    ok = ok && conv && rep.V_final <= 1e-10 && res <= 1e-6 && secs < 10.0 && rep.fitted_V_slope >= -2.2 &&
         rep.fitted_V_slope <= -1.8;
    d(std::string(name) + ".status", status_name(rep.status))(std::string(name) + ".V_final", rep.V_final)(
        std::string(name) + ".residual", res)(std::string(name) + ".slope", rep.fitted_V_slope)(
        std::string(name) + ".seconds", secs);
  }
  return {ok, d.str()};
}

Outcome uniqueness() {
  const MomentOperator op = array_op();
  const ComplexMatrix R = op.apply(synth_density(figure_density(), op.grid()));
  const DualVariable s1 = array_start(op);
  const DualVariable s2 = op.dual(2.5 * s1.coords);
  RealVector c(op.range_dim());
  UniformStream rng(1006);
  for (Index i = 0; i < c.size(); ++i) c(i) = rng.next(-0.2, 0.2);
  const SolveReport r1 = solve(op, R, RationalFamily{}, {}, s1);
  const SolveReport r2 = solve(op, R, RationalFamily{}, {}, s2);
  const SolveReport e1 = solve(op, R, ExponentialFamily{}, {}, s1);
  const SolveReport e2 = solve(op, R, ExponentialFamily{}, {}, op.dual(c));
  const bool conv = r1.status == SolveStatus::Converged && r2.status == SolveStatus::Converged &&
                    e1.status == SolveStatus::Converged && e2.status == SolveStatus::Converged;
  if (!conv) return {false, "a solve did not converge"};
  const double dr = MatrixDensity::sup_relative_difference(r2.density, r1.density);
  const double de = MatrixDensity::sup_relative_difference(e2.density, e1.density);
  return {dr <= 1e-6 && de <= 1e-6, Detail()("rational_sup_rel", dr)("exponential_sup_rel", de).str()};
}

Outcome entropy_minimality() {
  const MomentOperator op = array_op();
  const ComplexMatrix R = op.apply(synth_density(figure_density(), op.grid()));
  const SolveReport rat = solve(op, R, RationalFamily{});
  const SolveReport ex = solve(op, R, ExponentialFamily{});
  if (rat.status != SolveStatus::Converged || ex.status != SolveStatus::Converged)
    return {false, "a solve did not converge"};

  // Null space of the scalar forward map rho -> range coordinates.
  const Index d = op.range_dim(), n = static_cast<Index>(op.node_count());
  RealMatrix a(d, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < d; ++i) a(i, j) = op.grid().weight(j) * op.adjoint_basis(j, i)(0, 0).real();
  const RealMatrix null = Eigen::JacobiSVD<RealMatrix>(a, Eigen::ComputeFullV).matrixV().rightCols(n - d);

  UniformStream rng(1007);
  const double s_rat = entropy(rat.density, op.grid(), BurgEntropy{});
  const double s_ex = entropy(ex.density, op.grid(), VonNeumannEntropy{});
  double worst = -INFINITY, moment_drift = 0.0;
  for (int k = 0; k < 20; ++k) {
    RealVector coef(null.cols());
    for (Index i = 0; i < coef.size(); ++i) coef(i) = rng.next(-1.0, 1.0);
    RealVector mu = null * coef;
    mu *= rng.next(0.05, 0.9) * std::min(rat.density.min_eigenvalue(), ex.density.min_eigenvalue()) /
          mu.cwiseAbs().maxCoeff();
    MatrixDensity pr = rat.density, pe = ex.density;
    for (std::size_t j = 0; j < pr.size(); ++j) {
      pr.samples[j] = pr[j] + HermitianMatrix::identity(1) * mu(static_cast<Index>(j));
      pe.samples[j] = pe[j] + HermitianMatrix::identity(1) * mu(static_cast<Index>(j));
    }
    moment_drift = std::max(moment_drift, (op.apply(pr) - op.apply(rat.density)).norm() / R.norm());
    worst = std::max(worst, s_rat - entropy(pr, op.grid(), BurgEntropy{}));
    worst = std::max(worst, s_ex - entropy(pe, op.grid(), VonNeumannEntropy{}));
  }
  return {worst <= 1e-9 && moment_drift <= 1e-10,
          Detail()("perturbations", 20)("max_entropy_decrease", worst)("moment_drift", moment_drift).str()};
}

Outcome weighted_completeness() {
  const MomentOperator op = array_op();
  const MatrixDensity truth = synth_density(figure_density(), op.grid());
  const ComplexMatrix R = op.apply(truth);
  const Family fam = WeightedRationalFamily::from_sigma(truth);
  const DualVariable s0 = array_start(op);
  bool ok = true;
  Detail d;
  for (const auto& [name, start] : {std::pair{"start", s0}, std::pair{"scaled_start", op.dual(2.0 * s0.coords)}}) {
    const SolveReport rep = solve(op, R, fam, {}, start);
    const double diff = rep.status == SolveStatus::Converged
                            ? MatrixDensity::sup_relative_difference(rep.density, truth)
                            : INFINITY;
    ok = ok && diff <= 1e-6;
    d(std::string(name) + ".status", status_name(rep.status))(std::string(name) + ".sup_rel", diff);
  }
  return {ok, d.str()};
}

Outcome infeasibility() {
  const double s2 = std::numbers::sqrt2;
  const NecessaryCheck nc = array_necessary_matrix({{0.0, 1.0}, {1.0, 1.2}, {s2, 1.2}, {1.0 + s2, 1.2}});
  const MomentOperator op = array_op();
  const ComplexMatrix R = nc.matrix.matrix();
  const SolveReport r = solve(op, R, RationalFamily{});
  const SolveReport e = solve(op, R, ExponentialFamily{});
  auto detected = [](SolveStatus s) {
    return s == SolveStatus::DivergedBoundary || s == SolveStatus::DivergedUnbounded;
  };

  TempDir dir;
  ExampleBundle b = make_example("nonequispaced-array");
  b.problem.moment = R;
  write_text(dir / "bad.json", problem_to_json(b.problem).dump(2));
  const int code_r = run_cli_binary("solve --problem \"" + (dir / "bad.json") + "\" --family rational");
  const int code_e = run_cli_binary("solve --problem \"" + (dir / "bad.json") + "\" --family exponential");
  return {!nc.psd && detected(r.status) && detected(e.status) && code_r == kExitDiverged && code_e == kExitDiverged,
          Detail()("necessary_min_eig", nc.min_eigenvalue)("rational", status_name(r.status))(
              "exponential", status_name(e.status))("exit_rational", code_r)("exit_exponential", code_e)
              .str()};
}

Outcome dimension_dichotomy() {
  const ExampleBundle b = make_example("grid2d");
  const Problem& p = b.problem;
  bool rejected = false;
  try {
    solve(p.op, p.moment, RationalFamily{});
  } catch (const UnsupportedProblem&) {
    rejected = true;
  }
  const SolveReport e = solve(p.op, p.moment, ExponentialFamily{});
  const bool conv = e.status == SolveStatus::Converged;
  return {rejected && conv && e.V_final <= 1e-10,
          Detail()("nodes", p.op.node_count())("rational_rejected", rejected)("exponential",
                                                                                status_name(e.status))(
              "V_final", e.V_final)
              .str()};
}

Outcome state_covariance() {
  const StateSpaceModel model = random_state_model(4, 2, 2024);
  const SupportGrid grid = build_grid(GridKind::Interval1d, {{-kPi, kPi}}, 400, 5);
  const MomentOperator op = state_cov_problem(model, grid);
  DensitySpec spec;
  spec.profile.baseline = 1.0;
  spec.profile.bumps = {{{0.5}, {0.6}, 0.8}};
  spec.m = 2;
  spec.congruence = 0.5;
  spec.seed = 2025;
  const ComplexMatrix R = op.apply(synth_density(spec, grid));
  const StateCovarianceCheck chk = validate_state_covariance(R, model);
  const double syl = chk.sylvester_residual / R.norm();

  // Feedback factor with a small stabilizing gain at a feasible lambda.
  UniformStream rng(2026);
  StateSpaceModel fb = model;
  ComplexMatrix gain = qtest::random_complex(rng, 2, 4);
  gain *= 0.1 / (model.B * gain).norm();
  fb.C_o = gain;
  fb.validate();
  const SolveReport rep = solve(op, R, RationalFamily{});
  if (rep.status != SolveStatus::Converged) return {false, "state covariance solve: " + status_name(rep.status)};
  const FeedbackFactor ff = feedback_spectral_factor(fb, rep.lambda_hat.matrix, grid);

  // Herglotz positivity on random disk points and boundary recovery of rho_hat.
  double min_eig = INFINITY;
  for (int k = 0; k < 100; ++k) {
    const Complex z = std::polar(std::sqrt(rng.next()) * 0.999, rng.next(-kPi, kPi));
    const ComplexMatrix f = herglotz_interpolant(rep.density, grid, z);
    min_eig = std::min(min_eig,
                       Eigen::SelfAdjointEigenSolver<ComplexMatrix>(0.5 * (f + f.adjoint())).eigenvalues().minCoeff());
  }
  double peak = 0.0, worst = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j) peak = std::max(peak, rep.density[j].norm());
  for (std::size_t j = 0; j < grid.size(); j += 20) {
    const ComplexMatrix f = herglotz_interpolant(rep.density, grid, std::polar(0.99, -grid.node(j)[0]));
    worst = std::max(worst, (0.5 * (f + f.adjoint()) - rep.density[j].matrix()).norm());
  }
  const double recovery = worst / peak;
  return {chk.rank_ok && syl <= 1e-8 && ff.identity_residual <= 1e-8 && min_eig >= -1e-10 && recovery <= 0.05,
          Detail()("rank", chk.rank)("rank_ok", chk.rank_ok)("sylvester_rel", syl)("feedback_identity",
                                                                                   ff.identity_residual)(
              "herglotz_min_eig", min_eig)("boundary_sup_rel", recovery)
              .str()};
}

Outcome determinism() {
  TempDir dir;
  bool ok = true;
  int runs = 0;
  for (const char* ex : {"nonequispaced-array", "statecov"}) {
    std::string first;
    for (const char* threads : {"1", "4", "2", "1"}) {
      const std::string tag = std::string(ex) + "_" + std::to_string(runs++);
      const int code = run_cli_binary(std::string("solve --example ") + ex + " --seed 7 --threads " + threads +
                                      " --report \"" + (dir / (tag + ".json")) + "\" --density-out \"" +
                                      (dir / (tag + ".csv")) + "\" --trace-out \"" + (dir / (tag + ".trace")) + "\"");
      const std::string bytes = slurp(dir / (tag + ".json")) + slurp(dir / (tag + ".csv")) +
                                slurp(dir / (tag + ".trace"));
      ok = ok && code == kExitOk && !bytes.empty();
      if (first.empty())
        first = bytes;
      else
        ok = ok && bytes == first;
    }
  }
  return {ok, Detail()("runs", runs)("thread_counts", "1,4,2,1").str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"matrix calculus", matrix_calculus},
      {"bell partial trace", bell_partial_trace},
      {"duality pairing", duality_pairing},
      {"jacobian validity", jacobian_validity},
      {"array recovery", recovery},
      {"start independence", uniqueness},
      {"entropy minimality", entropy_minimality},
      {"weighted completeness", weighted_completeness},
      {"infeasibility", infeasibility},
      {"dimension dichotomy", dimension_dichotomy},
      {"state covariance", state_covariance},
      {"determinism", determinism},
  };
  std::size_t first = 0, last = criteria.size();
  if (argc > 1) {
    const long k = std::strtol(argv[1], nullptr, 10);
    if (k < 1 || k > static_cast<long>(criteria.size())) {
      std::fprintf(stderr, "criterion index must be in 1..%zu\n", criteria.size());
      return 2;
    }
    first = static_cast<std::size_t>(k - 1);
    last = first + 1;
  }
  int failures = 0;
  for (std::size_t i = first; i < last; ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s  %2zu %-22s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", last - first - failures, last - first);
  return failures == 0 ? 0 : 1;
}
