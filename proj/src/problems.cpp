#include "qmoment/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace qmoment {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr Complex kJ{0.0, 1.0};

Index numerical_rank(const ComplexMatrix& m) {
  const RealVector sv = Eigen::JacobiSVD<ComplexMatrix>(m).singularValues();
  if (sv.size() == 0 || !(sv(0) > 0.0)) return 0;
  Index r = 0;
  while (r < sv.size() && sv(r) > 1e-10 * sv(0)) ++r;
  return r;
}

const Complex* find_key(const ArrayMoments& values, double key) {
  for (const auto& [k, v] : values)
    if (std::abs(k - key) <= 1e-12) return &v;
  return nullptr;
}

// Random complex matrix with spectral norm `norm`.
ComplexMatrix scaled_random(UniformStream& rng, Index m, double norm) {
  ComplexMatrix k(m, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < m; ++i) k(i, j) = Complex(rng.next(-1.0, 1.0), rng.next(-1.0, 1.0));
  const double s = Eigen::JacobiSVD<ComplexMatrix>(k).singularValues()(0);
  return s > 0.0 ? ComplexMatrix(k * (norm / s)) : k;
}

}  // namespace

// ------------------------------------------------------------ sensor arrays

std::vector<double> ArraySpec::default_positions() { return {0.0, 1.0, 1.0 + std::numbers::sqrt2}; }

ArraySpec ArraySpec::standard() {
  ArraySpec s;
  s.grid = build_grid(GridKind::Interval1d, {{0.0, kPi}}, 32, 5);
  return s;
}

std::vector<double> array_difference_set(const std::vector<double>& positions) {
  if (positions == ArraySpec::default_positions())
    return {0.0, 1.0, std::numbers::sqrt2, 1.0 + std::numbers::sqrt2};
  std::vector<double> diffs;
  for (std::size_t a = 0; a < positions.size(); ++a)
    for (std::size_t b = 0; b < positions.size(); ++b) {
      const double d = positions[b] - positions[a];
      if (d >= -1e-12) diffs.push_back(std::max(d, 0.0));
    }
  std::sort(diffs.begin(), diffs.end());
  std::vector<double> out;
  for (double d : diffs)
    if (out.empty() || d - out.back() > 1e-12) out.push_back(d);
  return out;
}

MomentOperator nonequispaced_array_problem(const ArraySpec& spec) {
  const std::vector<double>& x = spec.positions;
  if (x.size() < 2) throw std::invalid_argument("array: need at least two sensors");
  if (x.front() != 0.0) throw std::invalid_argument("array: first position must be 0");
  for (std::size_t a = 0; a < x.size(); ++a) {
    if (!std::isfinite(x[a])) throw std::invalid_argument("array: positions must be finite");
    for (std::size_t b = 0; b < a; ++b)
      if (std::abs(x[a] - x[b]) <= 1e-12) throw std::invalid_argument("array: positions must be distinct");
  }
  if (!(spec.wavenumber > 0.0)) throw std::invalid_argument("array: wavenumber must be positive");
  SupportGrid grid = spec.grid.size() == 0 ? ArraySpec::standard().grid : spec.grid;
  if (grid.kind() != GridKind::Interval1d) throw std::invalid_argument("array: grid must be one-dimensional");

  std::vector<ComplexMatrix> left;
  left.reserve(grid.size());
  const Index n = static_cast<Index>(x.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double c = std::cos(grid.node(j)[0]);
    ComplexMatrix g(n, 1);
    for (Index l = 0; l < n; ++l) g(l, 0) = std::exp(kJ * (spec.wavenumber * x[static_cast<std::size_t>(l)] * c));
    left.push_back(std::move(g));
  }
  return MomentOperator(std::move(grid), KernelSamples::symmetric(std::move(left)));
}

ArrayMoments array_moments(const ComplexMatrix& R) {
  if (R.rows() != 3 || R.cols() != 3) throw DimensionError("array_moments: expected a 3 x 3 moment matrix");
  return {{0.0, R(0, 0)},
          {1.0, R(0, 1)},
          {std::numbers::sqrt2, R(1, 2)},
          {1.0 + std::numbers::sqrt2, R(0, 2)}};
}

NecessaryCheck array_necessary_matrix(const ArrayMoments& values) {
  const double keys[] = {0.0, 1.0, std::numbers::sqrt2, 1.0 + std::numbers::sqrt2};
  Complex r[4];
  for (int i = 0; i < 4; ++i) {
    const Complex* v = find_key(values, keys[i]);
    if (!v) {
      std::ostringstream os;
      os << "array_necessary_matrix: missing moment for index " << keys[i];
      throw std::invalid_argument(os.str());
    }
    r[i] = *v;
  }
  ComplexMatrix m(3, 3);
  m << r[0].real(), r[1], r[3],
       std::conj(r[1]), r[0].real(), r[2],
       std::conj(r[3]), std::conj(r[2]), r[0].real();
  NecessaryCheck out;
  out.matrix = HermitianMatrix::trusted(m);
  out.min_eigenvalue = min_eigenvalue(out.matrix);
  out.psd = out.min_eigenvalue >= -1e-12 * std::abs(r[0].real());
  return out;
}

// -------------------------------------------------------- two-dimensional grid

MomentOperator grid2d_problem(int n, const SupportGrid& grid) {
  if (n < 1) throw std::invalid_argument("grid2d: n must be >= 1");
  if (grid.kind() != GridKind::Rectangle2d) throw std::invalid_argument("grid2d: grid must be a rectangle");
  std::vector<ComplexMatrix> left, right;
  left.reserve(grid.size());
  right.reserve(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const auto t = grid.node(j);
    ComplexMatrix gl(n + 1, 1), gr(1, n + 1);
    for (int k = 0; k <= n; ++k) {
      gl(k, 0) = std::exp(kJ * (k * t[0]));
      gr(0, k) = std::exp(kJ * (k * t[1]));
    }
    left.push_back(std::move(gl));
    right.push_back(std::move(gr));
  }
  return MomentOperator(grid, KernelSamples(std::move(left), std::move(right)));
}

// ----------------------------------------------------------- partial trace

MomentOperator partial_trace_problem(int d_a, int d_b) {
  if (d_a < 1 || d_b < 1) throw std::invalid_argument("partial_trace: dimensions must be >= 1");
  std::vector<ComplexMatrix> left;
  for (int k = 0; k < d_b; ++k) {
    ComplexMatrix g = ComplexMatrix::Zero(d_a, d_a * d_b);
    for (int a = 0; a < d_a; ++a) g(a, a * d_b + k) = 1.0;
    left.push_back(std::move(g));
  }
  return MomentOperator(SupportGrid::discrete(static_cast<std::size_t>(d_b)),
                        KernelSamples::symmetric(std::move(left)));
}

HermitianMatrix bell_state() {
  ComplexMatrix b = ComplexMatrix::Zero(4, 4);
  b(0, 0) = b(0, 3) = b(3, 0) = b(3, 3) = 0.5;
  return HermitianMatrix(b);
}

// ------------------------------------------------------- state covariance

double spectral_radius(const ComplexMatrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("spectral_radius: matrix must be square");
  if (a.size() == 0) return 0.0;
  Eigen::ComplexEigenSolver<ComplexMatrix> es(a, false);
  if (es.info() != Eigen::Success) throw NumericalError("spectral_radius: eigenvalue computation failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

void StateSpaceModel::validate() const {
  const Index nn = A.rows();
  if (nn == 0 || A.cols() != nn) throw DimensionError("state model: A must be square and non-empty");
  if (B.rows() != nn || B.cols() == 0) throw DimensionError("state model: B must be n x m");
  if (!(spectral_radius(A) < 1.0 - 1e-8))
    throw std::invalid_argument("state model: A must have all eigenvalues in the open unit disk");
  ComplexMatrix ctrb(nn, nn * B.cols());
  ComplexMatrix block = B;
  for (Index k = 0; k < nn; ++k) {
    ctrb.middleCols(k * B.cols(), B.cols()) = block;
    block = A * block;
  }
  if (numerical_rank(ctrb) != nn) throw std::invalid_argument("state model: (A, B) is not controllable");
  if (C_o) {
    if (C_o->rows() != B.cols() || C_o->cols() != nn) throw DimensionError("state model: C_o must be m x n");
    if (!(spectral_radius(A - B * (*C_o)) < 1.0 - 1e-8))
      throw std::invalid_argument("state model: A - B C_o must have all eigenvalues in the open unit disk");
  }
}

StateSpaceModel random_state_model(Index n, Index m, std::uint64_t seed, double radius) {
  if (n < 1 || m < 1) throw std::invalid_argument("random_state_model: dimensions must be >= 1");
  if (!(radius > 0.0 && radius < 1.0)) throw std::invalid_argument("random_state_model: radius must lie in (0, 1)");
  UniformStream rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    StateSpaceModel model;
    model.A = scaled_random(rng, n, 1.0);
    model.A *= radius / spectral_radius(model.A);
    model.B = ComplexMatrix(n, m);
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < n; ++i) model.B(i, j) = Complex(rng.next(-1.0, 1.0), rng.next(-1.0, 1.0));
    try {
      model.validate();
      return model;
    } catch (const std::invalid_argument&) {
    }
  }
  throw std::runtime_error("random_state_model: no controllable pair found");
}

MomentOperator state_cov_problem(const StateSpaceModel& model, const SupportGrid& grid) {
  model.validate();
  if (grid.kind() != GridKind::Interval1d) throw std::invalid_argument("state_cov: grid must be one-dimensional");
  const Index n = model.n();
  const double scale = 1.0 / std::sqrt(2.0 * kPi);
  const ComplexMatrix eye = ComplexMatrix::Identity(n, n);
  std::vector<ComplexMatrix> left;
  left.reserve(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const Complex z = std::exp(kJ * grid.node(j)[0]);
    left.push_back(scale * (eye - z * model.A).partialPivLu().solve(model.B));
  }
  return MomentOperator(grid, KernelSamples::symmetric(std::move(left)));
}

StateCovarianceCheck validate_state_covariance(const ComplexMatrix& R, const StateSpaceModel& model) {
  const Index n = model.n(), m = model.m();
  if (R.rows() != n || R.cols() != n) throw DimensionError("validate_state_covariance: R must be n x n");
  const ComplexMatrix q = R - model.A * R * model.A.adjoint();
  StateCovarianceCheck out;

  ComplexMatrix block = ComplexMatrix::Zero(n + m, n + m);
  block.topLeftCorner(n, n) = q;
  block.topRightCorner(n, m) = model.B;
  block.bottomLeftCorner(m, n) = model.B.adjoint();
  out.rank = numerical_rank(block);
  out.rank_ok = out.rank == 2 * m;

  // Real least squares for H: unknowns (Re, Im) of each entry, equations
  // (Re, Im) of each entry of B H + H* B* = q.
  const Index unknowns = 2 * m * n, equations = 2 * n * n;
  RealMatrix T(equations, unknowns);
  RealVector rhs(equations);
  auto flatten = [&](const ComplexMatrix& x, auto&& put) {
    for (Index c = 0; c < n; ++c)
      for (Index r = 0; r < n; ++r) {
        put(2 * (c * n + r), x(r, c).real());
        put(2 * (c * n + r) + 1, x(r, c).imag());
      }
  };
  for (Index u = 0; u < unknowns; ++u) {
    ComplexMatrix h = ComplexMatrix::Zero(m, n);
    const Index e = u / 2;
    h(e % m, e / m) = (u % 2 == 0) ? Complex(1.0, 0.0) : kJ;
    const ComplexMatrix image = model.B * h + h.adjoint() * model.B.adjoint();
    flatten(image, [&](Index i, double v) { T(i, u) = v; });
  }
  flatten(q, [&](Index i, double v) { rhs(i) = v; });
  const RealVector sol = Eigen::CompleteOrthogonalDecomposition<RealMatrix>(T).solve(rhs);
  out.H = ComplexMatrix(m, n);
  for (Index e = 0; e < m * n; ++e) out.H(e % m, e / m) = Complex(sol(2 * e), sol(2 * e + 1));
  out.sylvester_residual = (q - model.B * out.H - out.H.adjoint() * model.B.adjoint()).norm();
  return out;
}

ComplexMatrix herglotz_interpolant(const MatrixDensity& rho, const SupportGrid& grid, Complex z) {
  if (!(std::abs(z) <= 1.0 - 1e-6)) throw std::invalid_argument("herglotz_interpolant: |z| must be below 1 - 1e-6");
  if (rho.size() != grid.size()) throw DimensionError("herglotz_interpolant: density does not match grid");
  ComplexMatrix f = ComplexMatrix::Zero(rho.dim(), rho.dim());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const Complex e = z * std::exp(kJ * grid.node(j)[0]);
    f += (grid.weight(j) / (2.0 * kPi)) * ((1.0 + e) / (1.0 - e)) * rho[j].matrix();
  }
  return f;
}

FeedbackFactor feedback_spectral_factor(const StateSpaceModel& model, const ComplexMatrix& lambda,
                                        const SupportGrid& grid) {
  model.validate();
  if (!model.C_o) throw std::invalid_argument("feedback_spectral_factor: model has no feedback gain C_o");
  const Index n = model.n(), m = model.m();
  if (lambda.rows() != n || lambda.cols() != n) throw DimensionError("feedback_spectral_factor: lambda must be n x n");
  const ComplexMatrix& c = *model.C_o;
  const ComplexMatrix eye = ComplexMatrix::Identity(n, n);
  const ComplexMatrix a_cl = model.A - model.B * c;
  const double scale = 1.0 / std::sqrt(2.0 * kPi);

  FeedbackFactor out;
  out.degree_bound = 2 * n;
  out.G_o.reserve(grid.size());
  out.phi.reserve(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const Complex z = std::exp(kJ * grid.node(j)[0]);
    const ComplexMatrix resolvent_b = (eye - z * model.A).partialPivLu().solve(model.B);
    const ComplexMatrix g = scale * resolvent_b;
    const ComplexMatrix phi = ComplexMatrix::Identity(m, m) + z * c * resolvent_b;
    const ComplexMatrix g_o = scale * (eye - z * a_cl).partialPivLu().solve(model.B);
    const HermitianMatrix s = hermitian_part(g.adjoint() * lambda * g);
    const HermitianMatrix s_o = hermitian_part(g_o.adjoint() * lambda * g_o);
    for (const HermitianMatrix* h : {&s, &s_o}) {
      const double w = min_eigenvalue(*h);
      if (!(w > default_positivity_floor(*h))) {
        std::ostringstream os;
        os << "feedback_spectral_factor: G* lambda G is singular at node " << j;
        throw PositivityError(os.str(), w, j);
      }
    }
    const ComplexMatrix lhs = phi * matrix_inverse(s).matrix() * phi.adjoint();
    const ComplexMatrix rhs = matrix_inverse(s_o).matrix();
    out.identity_residual = std::max(out.identity_residual, (lhs - rhs).norm() / rhs.norm());
    out.G_o.push_back(g_o);
    out.phi.push_back(phi);
  }
  return out;
}

// ------------------------------------------------------ synthetic densities

double ScalarProfile::value(std::span<const double> t) const {
  double s = baseline;
  for (const Bump& b : bumps) {
    double q = 0.0;
    for (std::size_t a = 0; a < b.center.size() && a < t.size(); ++a) {
      const double u = (t[a] - b.center[a]) / b.width[a];
      q += u * u;
    }
    s += b.height * std::exp(-0.5 * q);
  }
  for (const Step& st : steps)
    if (!t.empty() && t[0] >= st.lower && t[0] < st.upper) s += st.height;
  return s;
}

DensitySpec DensitySpec::constant(double value, Index m) {
  DensitySpec s;
  s.profile.baseline = value;
  s.m = m;
  return s;
}

DensitySpec figure_density() {
  DensitySpec s;
  s.profile.baseline = 0.15;
  s.profile.bumps = {{{1.0}, {0.15}, 1.0}, {{2.3}, {0.25}, 0.5}};
  s.profile.steps = {{0.3, 0.45, 0.8}};
  return s;
}

MatrixDensity synth_density(const DensitySpec& spec, const SupportGrid& grid) {
  if (spec.m < 1) throw std::invalid_argument("synth_density: m must be >= 1");
  if (!(spec.congruence >= 0.0 && spec.congruence < 1.0))
    throw std::invalid_argument("synth_density: congruence factor must lie in [0, 1)");
  for (const Bump& b : spec.profile.bumps) {
    if (b.center.size() != b.width.size() || b.center.empty())
      throw std::invalid_argument("synth_density: bump center and width must have equal non-zero length");
    for (double w : b.width)
      if (!(w > 0.0)) throw std::invalid_argument("synth_density: bump widths must be positive");
  }
  const Index m = spec.m;
  ComplexMatrix k0, k1, k2;
  if (spec.congruence > 0.0) {
    UniformStream rng(spec.seed);
    k0 = scaled_random(rng, m, 1.0 / 3.0);
    k1 = scaled_random(rng, m, 1.0 / 3.0);
    k2 = scaled_random(rng, m, 1.0 / 3.0);
  }
  MatrixDensity out;
  out.samples.reserve(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const auto t = grid.node(j);
    const double s = spec.profile.value(t);
    if (!(s > 0.0) || !std::isfinite(s)) {
      std::ostringstream os;
      os << "synth_density: scalar profile is not positive at node " << j;
      throw PositivityError(os.str(), s, j);
    }
    ComplexMatrix f = ComplexMatrix::Identity(m, m);
    if (spec.congruence > 0.0)
      f += spec.congruence * (k0 + std::cos(t[0]) * k1 + std::sin(t[0]) * k2);
    HermitianMatrix rho = HermitianMatrix::trusted(s * f * f.adjoint());
    const double w = min_eigenvalue(rho);
    if (!(w > 0.0)) {
      std::ostringstream os;
      os << "synth_density: density is not positive at node " << j;
      throw PositivityError(os.str(), w, j);
    }
    out.samples.push_back(std::move(rho));
  }
  return out;
}

MomentOperator identity_problem(Index m) {
  if (m < 1) throw std::invalid_argument("identity_problem: m must be >= 1");
  return MomentOperator(SupportGrid::discrete(1), KernelSamples::symmetric({ComplexMatrix::Identity(m, m)}));
}

MomentOperator scalar_problem(const SupportGrid& grid) {
  return MomentOperator(grid, KernelSamples::symmetric(std::vector<ComplexMatrix>(grid.size(), ComplexMatrix::Ones(1, 1))));
}

}  // namespace qmoment
