#include "qmoment/moment_operator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qmoment/detail/blocked.hpp"
#include "qmoment/quadrature.hpp"

namespace qmoment {

namespace {

// trace(A B) for Hermitian A, B.
double trace_product(const ComplexMatrix& a, const ComplexMatrix& b) {
  double s = 0.0;
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i) s += (a(i, j) * b(j, i)).real();
  return s;
}

int coord_dim_for(GridKind kind) { return kind == GridKind::Rectangle2d ? 2 : 1; }

// Hermitian matrix units spanning the m x m Hermitian space over the reals.
std::vector<ComplexMatrix> hermitian_units(Index m) {
  std::vector<ComplexMatrix> units;
  units.reserve(static_cast<std::size_t>(m * m));
  for (Index k = 0; k < m; ++k) {
    ComplexMatrix h = ComplexMatrix::Zero(m, m);
    h(k, k) = 1.0;
    units.push_back(h);
  }
  for (Index k = 0; k < m; ++k)
    for (Index l = k + 1; l < m; ++l) {
      ComplexMatrix re = ComplexMatrix::Zero(m, m);
      re(k, l) = 1.0;
      re(l, k) = 1.0;
      units.push_back(re);
      ComplexMatrix im = ComplexMatrix::Zero(m, m);
      im(k, l) = Complex(0.0, 1.0);
      im(l, k) = Complex(0.0, -1.0);
      units.push_back(im);
    }
  return units;
}

}  // namespace

// ---------------------------------------------------------------- SupportGrid

int SupportGrid::dimension() const noexcept {
  switch (kind_) {
    case GridKind::Interval1d: return 1;
    case GridKind::Rectangle2d: return 2;
    case GridKind::Discrete: return 0;
  }
  return 0;
}

SupportGrid SupportGrid::build(GridKind kind, std::vector<Bounds> bounds, int panels, int order) {
  if (kind == GridKind::Discrete)
    throw std::invalid_argument("build_grid: use SupportGrid::discrete for discrete grids");
  const std::size_t axes = kind == GridKind::Interval1d ? 1 : 2;
  if (bounds.size() != axes) {
    std::ostringstream os;
    os << "build_grid: expected " << axes << " bound pair(s), got " << bounds.size();
    throw std::invalid_argument(os.str());
  }
  if (panels < 1) throw std::invalid_argument("build_grid: panels must be >= 1");
  if (order < 2 || order > 10) throw std::invalid_argument("build_grid: order must be in [2, 10]");
  for (const Bounds& b : bounds)
    if (!std::isfinite(b.lower) || !std::isfinite(b.upper) || !(b.upper > b.lower))
      throw std::invalid_argument("build_grid: bounds must be finite and increasing");

  SupportGrid g;
  g.kind_ = kind;
  g.coord_dim_ = coord_dim_for(kind);
  g.bounds_ = std::move(bounds);
  g.panels_ = panels;
  g.order_ = order;
  const GaussLegendreRule x = composite_gauss_legendre(g.bounds_[0].lower, g.bounds_[0].upper, panels, order);
  if (kind == GridKind::Interval1d) {
    g.coords_ = x.nodes;
    g.weights_ = x.weights;
    g.measure_ = g.bounds_[0].upper - g.bounds_[0].lower;
  } else {
    const GaussLegendreRule y = composite_gauss_legendre(g.bounds_[1].lower, g.bounds_[1].upper, panels, order);
    g.coords_.reserve(2 * x.nodes.size() * y.nodes.size());
    g.weights_.reserve(x.nodes.size() * y.nodes.size());
    for (std::size_t i = 0; i < x.nodes.size(); ++i)
      for (std::size_t k = 0; k < y.nodes.size(); ++k) {
        g.coords_.push_back(x.nodes[i]);
        g.coords_.push_back(y.nodes[k]);
        g.weights_.push_back(x.weights[i] * y.weights[k]);
      }
    g.measure_ = (g.bounds_[0].upper - g.bounds_[0].lower) * (g.bounds_[1].upper - g.bounds_[1].lower);
  }
  return g;
}

SupportGrid SupportGrid::discrete(std::size_t count) {
  if (count == 0) throw std::invalid_argument("discrete grid needs at least one node");
  SupportGrid g;
  g.kind_ = GridKind::Discrete;
  g.coord_dim_ = 1;
  g.weights_.assign(count, 1.0);
  g.coords_.resize(count);
  for (std::size_t j = 0; j < count; ++j) g.coords_[j] = static_cast<double>(j);
  g.measure_ = static_cast<double>(count);
  return g;
}

SupportGrid SupportGrid::from_samples(GridKind kind, std::vector<Bounds> bounds,
                                      std::vector<double> coords, std::vector<double> weights) {
  SupportGrid g;
  g.kind_ = kind;
  g.coord_dim_ = coord_dim_for(kind);
  if (weights.empty()) throw std::invalid_argument("grid: no nodes");
  if (coords.size() != weights.size() * static_cast<std::size_t>(g.coord_dim_))
    throw std::invalid_argument("grid: coordinate count does not match node count");
  for (double w : weights)
    if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("grid: weights must be positive");
  if (kind != GridKind::Discrete) {
    if (bounds.size() != static_cast<std::size_t>(g.coord_dim_))
      throw std::invalid_argument("grid: bounds do not match grid kind");
    for (std::size_t j = 0; j < weights.size(); ++j)
      for (int a = 0; a < g.coord_dim_; ++a) {
        const double c = coords[j * g.coord_dim_ + a];
        if (c < bounds[a].lower || c > bounds[a].upper)
          throw std::invalid_argument("grid: node outside declared bounds");
      }
  }
  g.bounds_ = std::move(bounds);
  g.coords_ = std::move(coords);
  g.weights_ = std::move(weights);
  g.measure_ = 0.0;
  for (double w : g.weights_) g.measure_ += w;
  return g;
}

SupportGrid build_grid(GridKind kind, std::vector<Bounds> bounds, int panels, int order) {
  return SupportGrid::build(kind, std::move(bounds), panels, order);
}

// -------------------------------------------------------------- KernelSamples

KernelSamples::KernelSamples(std::vector<ComplexMatrix> left, std::vector<ComplexMatrix> right)
    : left_(std::move(left)), right_(std::move(right)) {
  if (left_.empty()) throw DimensionError("KernelSamples: empty kernel list");
  if (left_.size() != right_.size()) throw DimensionError("KernelSamples: left/right node counts differ");
  n_left_ = left_.front().rows();
  m_ = left_.front().cols();
  n_right_ = right_.front().cols();
  if (n_left_ == 0 || m_ == 0 || n_right_ == 0) throw DimensionError("KernelSamples: empty kernel");
  symmetric_ = n_left_ == n_right_;
  for (std::size_t j = 0; j < left_.size(); ++j) {
    const ComplexMatrix& gl = left_[j];
    const ComplexMatrix& gr = right_[j];
    if (gl.rows() != n_left_ || gl.cols() != m_ || gr.rows() != m_ || gr.cols() != n_right_)
      throw DimensionError("KernelSamples: inconsistent kernel dimensions across nodes");
    if (!gl.allFinite() || !gr.allFinite()) throw NumericalError("KernelSamples: non-finite kernel value");
    if (symmetric_ && (gr - gl.adjoint()).norm() > 1e-12 * std::max(1.0, gl.norm())) symmetric_ = false;
  }
}

KernelSamples KernelSamples::symmetric(std::vector<ComplexMatrix> left) {
  std::vector<ComplexMatrix> right;
  right.reserve(left.size());
  for (const ComplexMatrix& g : left) right.push_back(g.adjoint());
  return KernelSamples(std::move(left), std::move(right));
}

// -------------------------------------------------------------- MatrixDensity

MatrixDensity MatrixDensity::constant(std::size_t nodes, const HermitianMatrix& value) {
  return MatrixDensity{std::vector<HermitianMatrix>(nodes, value)};
}

double MatrixDensity::min_eigenvalue() const {
  double w = std::numeric_limits<double>::infinity();
  for (const HermitianMatrix& s : samples) w = std::min(w, qmoment::min_eigenvalue(s));
  return w;
}

double MatrixDensity::sup_relative_difference(const MatrixDensity& a, const MatrixDensity& b) {
  if (a.size() != b.size()) throw DimensionError("sup_relative_difference: node count mismatch");
  double diff = 0.0, scale = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    diff = std::max(diff, (a[j].matrix() - b[j].matrix()).norm());
    scale = std::max(scale, a[j].norm());
  }
  return scale > 0.0 ? diff / scale : diff;
}

// ---------------------------------------------------------------- range basis

RangeBasis compute_range_basis(const SupportGrid& grid, const KernelSamples& kernels) {
  if (kernels.size() == 0) throw DimensionError("compute_range_basis: empty kernel list");
  if (kernels.size() != grid.size())
    throw DimensionError("compute_range_basis: kernel samples do not match grid nodes");
  const Index nl = kernels.n_left(), nr = kernels.n_right(), m = kernels.m();
  const std::vector<ComplexMatrix> units = hermitian_units(m);
  const Index entries = nl * nr;
  const Index cols = static_cast<Index>(grid.size() * units.size());

  RealMatrix gen(2 * entries, cols);
  detail::blocked_for(grid.size(), [&](std::size_t j) {
    for (std::size_t u = 0; u < units.size(); ++u) {
      const ComplexMatrix g = grid.weight(j) * kernels.left(j) * units[u] * kernels.right(j);
      const Index c = static_cast<Index>(j * units.size() + u);
      for (Index k = 0; k < entries; ++k) {
        gen(2 * k, c) = g(k % nl, k / nl).real();
        gen(2 * k + 1, c) = g(k % nl, k / nl).imag();
      }
    }
  });

  Eigen::BDCSVD<RealMatrix> svd(gen, Eigen::ComputeThinU);
  const RealVector& sv = svd.singularValues();
  RangeBasis basis;
  if (sv.size() == 0 || !(sv(0) > 0.0)) return basis;
  const double threshold = kRangeRankThreshold * sv(0);
  for (Index i = 0; i < sv.size() && sv(i) > threshold; ++i) {
    RealVector u = svd.matrixU().col(i);
    ComplexMatrix e(nl, nr);
    for (Index k = 0; k < entries; ++k) e(k % nl, k / nl) = Complex(u(2 * k), u(2 * k + 1));
    // Deterministic sign: positive real trace when it is significant,
    // otherwise a positive largest-magnitude component.
    double sign = 1.0;
    if (nl == nr && std::abs(e.trace().real()) > 1e-8) {
      sign = e.trace().real() > 0.0 ? 1.0 : -1.0;
    } else {
      Index arg = 0;
      u.cwiseAbs().maxCoeff(&arg);
      sign = u(arg) >= 0.0 ? 1.0 : -1.0;
    }
    basis.elements.push_back(sign * e);
  }
  return basis;
}

// ------------------------------------------------------------- MomentOperator

MomentOperator::MomentOperator(SupportGrid grid, KernelSamples kernels)
    : grid_(std::move(grid)), kernels_(std::move(kernels)) {
  if (kernels_.size() != grid_.size())
    throw DimensionError("MomentOperator: kernel samples do not match grid nodes");
  basis_ = compute_range_basis(grid_, kernels_);
  const std::size_t d = static_cast<std::size_t>(basis_.dim());
  adjoint_basis_.resize(grid_.size() * d);
  adjoint_stack_.resize(grid_.size());
  const Index mm = m() * m();
  detail::blocked_for(grid_.size(), [&](std::size_t j) {
    ComplexMatrix& stack = adjoint_stack_[j];
    stack.resize(mm, static_cast<Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
      const ComplexMatrix a = kernels_.left(j).adjoint() * basis_.elements[i] * kernels_.right(j).adjoint();
      adjoint_basis_[j * d + i] = 0.5 * (a + a.adjoint());
      stack.col(static_cast<Index>(i)) = adjoint_basis_[j * d + i].reshaped();
    }
  });
}

void MomentOperator::check_density(const MatrixDensity& rho, const char* what) const {
  if (rho.size() != grid_.size() || rho.dim() != m()) {
    std::ostringstream os;
    os << what << ": density has " << rho.size() << " samples of dimension " << rho.dim()
       << ", operator expects " << grid_.size() << " of dimension " << m();
    throw DimensionError(os.str());
  }
}

ComplexMatrix MomentOperator::apply(const MatrixDensity& rho) const {
  check_density(rho, "apply_L");
  const ComplexMatrix zero = ComplexMatrix::Zero(n_left(), n_right());
  return detail::blocked_reduce(
      grid_.size(), zero,
      [&](std::size_t b, std::size_t e, ComplexMatrix& acc) {
        for (std::size_t j = b; j < e; ++j)
          acc.noalias() += grid_.weight(j) * (kernels_.left(j) * rho[j].matrix() * kernels_.right(j));
      },
      [](ComplexMatrix& acc, const ComplexMatrix& part) { acc += part; });
}

MatrixDensity MomentOperator::adjoint(const ComplexMatrix& lambda) const {
  if (lambda.rows() != n_left() || lambda.cols() != n_right())
    throw DimensionError("apply_L_adjoint: dual variable has the wrong shape");
  MatrixDensity out;
  out.samples.resize(grid_.size());
  detail::blocked_for(grid_.size(), [&](std::size_t j) {
    out.samples[j] = hermitian_part(kernels_.left(j).adjoint() * lambda * kernels_.right(j).adjoint());
  });
  return out;
}

MatrixDensity MomentOperator::adjoint(const DualVariable& lambda) const { return adjoint(lambda.matrix); }

ComplexMatrix MomentOperator::adjoint_at(std::size_t node, const RealVector& coords) const {
  return (adjoint_stack_[node] * coords.cast<Complex>()).reshaped(m(), m());
}

RealVector MomentOperator::range_coordinates(const MatrixDensity& rho) const {
  check_density(rho, "range_coordinates");
  const Index d = range_dim();
  return detail::blocked_reduce(
      grid_.size(), RealVector(RealVector::Zero(d)),
      [&](std::size_t b, std::size_t e, RealVector& acc) {
        for (std::size_t j = b; j < e; ++j)
          for (Index i = 0; i < d; ++i)
            acc(i) += grid_.weight(j) * trace_product(adjoint_basis(j, i), rho[j].matrix());
      },
      [](RealVector& acc, const RealVector& part) { acc += part; });
}

DualVariable MomentOperator::dual(const RealVector& coords) const {
  if (coords.size() != range_dim()) throw DimensionError("dual: coordinate count does not match range dimension");
  ComplexMatrix mat = ComplexMatrix::Zero(n_left(), n_right());
  for (Index i = 0; i < range_dim(); ++i) mat += coords(i) * basis_.elements[static_cast<std::size_t>(i)];
  return {coords, mat};
}

DualVariable MomentOperator::dual_from_matrix(const ComplexMatrix& lambda) const {
  return dual(project(lambda).coords);
}

Projection MomentOperator::project(const ComplexMatrix& r) const {
  if (r.rows() != n_left() || r.cols() != n_right())
    throw DimensionError("project_to_range: matrix has the wrong shape");
  Projection p;
  p.coords.resize(range_dim());
  ComplexMatrix rest = r;
  for (Index i = 0; i < range_dim(); ++i) {
    const ComplexMatrix& e = basis_.elements[static_cast<std::size_t>(i)];
    p.coords(i) = inner(e, r);
    rest -= p.coords(i) * e;
  }
  p.residual = rest.norm();
  return p;
}

// ------------------------------------------------------------ free functions

ComplexMatrix apply_L(const MomentOperator& op, const MatrixDensity& rho) { return op.apply(rho); }

MatrixDensity apply_L_adjoint(const MomentOperator& op, const DualVariable& lambda) {
  return op.adjoint(lambda);
}

Projection project_to_range(const MomentOperator& op, const ComplexMatrix& r) { return op.project(r); }

FeasibilityResult is_dual_feasible(const MomentOperator& op, const DualVariable& lambda, double floor) {
  FeasibilityResult res;
  res.min_eigenvalue = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < op.node_count(); ++j) {
    const double w = min_eigenvalue(HermitianMatrix::trusted(op.adjoint_at(j, lambda.coords)));
    if (w < res.min_eigenvalue) {
      res.min_eigenvalue = w;
      res.argmin_node = j;
    }
  }
  res.feasible = res.min_eigenvalue > floor;
  return res;
}

double functional_C(const MomentOperator& op, const ComplexMatrix& r, const DualVariable& lambda) {
  if (r.rows() != op.n_left() || r.cols() != op.n_right())
    throw DimensionError("functional_C: moment has the wrong shape");
  return inner(lambda.matrix, r);
}

double density_inner(const MatrixDensity& x, const MatrixDensity& y, const SupportGrid& grid) {
  if (x.size() != grid.size() || y.size() != grid.size())
    throw DimensionError("density_inner: sample counts do not match the grid");
  double s = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j) s += grid.weight(j) * trace_product(x[j].matrix(), y[j].matrix());
  return s;
}

double entropy(const MatrixDensity& rho, const SupportGrid& grid, const EntropyKind& kind) {
  if (rho.size() != grid.size()) throw DimensionError("entropy: density does not match the grid");
  const MatrixDensity* sigma = nullptr;
  if (const auto* rel = std::get_if<RelativeEntropy>(&kind)) {
    sigma = &rel->sigma;
    if (sigma->size() != grid.size() || sigma->dim() != rho.dim())
      throw DimensionError("entropy: prior density does not match");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const EigDecomposition e = eig(rho[j]);
    if (!(e.eigenvalues(0) > 0.0)) {
      std::ostringstream os;
      os << "entropy: density is not positive at node " << j;
      throw PositivityError(os.str(), e.eigenvalues(0), j);
    }
    double value = 0.0;
    if (std::holds_alternative<BurgEntropy>(kind)) {
      for (Index k = 0; k < e.eigenvalues.size(); ++k) value -= std::log(e.eigenvalues(k));
    } else {
      for (Index k = 0; k < e.eigenvalues.size(); ++k) value += e.eigenvalues(k) * std::log(e.eigenvalues(k));
      if (sigma) {
        const EigDecomposition es = eig((*sigma)[j]);
        if (!(es.eigenvalues(0) > 0.0)) {
          std::ostringstream os;
          os << "entropy: prior density is not positive at node " << j;
          throw PositivityError(os.str(), es.eigenvalues(0), j);
        }
        const HermitianMatrix log_sigma = es.apply([](double w) { return std::log(w); });
        value -= trace_product(rho[j].matrix(), log_sigma.matrix());
      }
    }
    total += grid.weight(j) * value;
  }
  return total;
}

}  // namespace qmoment
