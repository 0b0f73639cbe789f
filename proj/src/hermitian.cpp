#include "qmoment/hermitian.hpp"

#include <cmath>
#include <sstream>

namespace qmoment {

namespace {

void require_square(const ComplexMatrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    std::ostringstream os;
    os << what << ": expected a non-empty square matrix, got " << m.rows() << "x" << m.cols();
    throw DimensionError(os.str());
  }
}

void require_same_dim(const HermitianMatrix& a, const HermitianMatrix& b, const char* what) {
  if (a.dim() != b.dim()) {
    std::ostringstream os;
    os << what << ": dimension mismatch " << a.dim() << " vs " << b.dim();
    throw DimensionError(os.str());
  }
}

// Eigenvalues of an HPD argument, with PositivityError on failure.
EigDecomposition positive_eig(const HermitianMatrix& p, const char* what) {
  EigDecomposition e = eig(p);
  const double floor = default_positivity_floor(p);
  if (!(e.eigenvalues(0) > floor)) {
    std::ostringstream os;
    os << what << ": matrix is not positive definite (min eigenvalue " << e.eigenvalues(0) << ")";
    throw PositivityError(os.str(), e.eigenvalues(0));
  }
  return e;
}

// U (F o (U* D U)) U* with F given entrywise.
template <class Factor>
HermitianMatrix eigenbasis_scale(const EigDecomposition& e, const HermitianMatrix& delta,
                                 Factor&& factor) {
  const ComplexMatrix& u = e.eigenvectors;
  ComplexMatrix t = u.adjoint() * delta.matrix() * u;
  const Index n = t.rows();
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) t(i, j) *= factor(i, j);
  return hermitian_part(u * t * u.adjoint());
}

}  // namespace

HermitianMatrix::HermitianMatrix(const ComplexMatrix& m) {
  require_square(m, "HermitianMatrix");
  if (!m.allFinite()) throw NumericalError("HermitianMatrix: non-finite entries");
  const double defect = (m - m.adjoint()).norm();
  const double scale = m.norm();
  if (defect > kHermitianTolerance * scale) {
    std::ostringstream os;
    os << "HermitianMatrix: ||M - M*|| = " << defect << " exceeds " << kHermitianTolerance
       << " * ||M|| = " << kHermitianTolerance * scale;
    throw HermiticityError(os.str());
  }
  m_ = 0.5 * (m + m.adjoint());
}

HermitianMatrix HermitianMatrix::trusted(ComplexMatrix m) {
  HermitianMatrix h;
  h.m_ = 0.5 * (m + m.adjoint());
  return h;
}

HermitianMatrix HermitianMatrix::zero(Index dim) {
  return trusted(ComplexMatrix::Zero(dim, dim));
}

HermitianMatrix HermitianMatrix::identity(Index dim) {
  return trusted(ComplexMatrix::Identity(dim, dim));
}

HermitianMatrix HermitianMatrix::diagonal(const RealVector& diag) {
  return trusted(diag.cast<Complex>().asDiagonal());
}

HermitianMatrix HermitianMatrix::operator+(const HermitianMatrix& o) const {
  require_same_dim(*this, o, "HermitianMatrix::operator+");
  return trusted(m_ + o.m_);
}

HermitianMatrix HermitianMatrix::operator-(const HermitianMatrix& o) const {
  require_same_dim(*this, o, "HermitianMatrix::operator-");
  return trusted(m_ - o.m_);
}

HermitianMatrix HermitianMatrix::operator*(double s) const { return trusted(m_ * s); }

EigDecomposition eig(const HermitianMatrix& h) {
  if (h.dim() == 0) throw DimensionError("eig: empty matrix");
  if (!h.matrix().allFinite()) throw NumericalError("eig: non-finite input");
  if (h.dim() == 1) {
    EigDecomposition e;
    e.eigenvalues = RealVector::Constant(1, h(0, 0).real());
    e.eigenvectors = ComplexMatrix::Identity(1, 1);
    return e;
  }
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h.matrix());
  if (solver.info() != Eigen::Success) throw NumericalError("eig: eigendecomposition failed");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

HermitianMatrix hermitian_part(const ComplexMatrix& m) {
  require_square(m, "hermitian_part");
  return HermitianMatrix::trusted(m);
}

HermitianMatrix matrix_exp(const HermitianMatrix& h) {
  return eig(h).apply([](double w) { return std::exp(w); });
}

HermitianMatrix matrix_log(const HermitianMatrix& p) {
  return positive_eig(p, "matrix_log").apply([](double w) { return std::log(w); });
}

HermitianMatrix matrix_sqrt(const HermitianMatrix& p) {
  EigDecomposition e = eig(p);
  if (e.eigenvalues(0) < -default_positivity_floor(p))
    throw PositivityError("matrix_sqrt: matrix is not positive semidefinite", e.eigenvalues(0));
  return e.apply([](double w) { return std::sqrt(std::max(w, 0.0)); });
}

HermitianMatrix matrix_inverse(const HermitianMatrix& p) {
  return positive_eig(p, "matrix_inverse").apply([](double w) { return 1.0 / w; });
}

double logarithmic_mean(double ci, double cj) {
  const double lo = std::min(ci, cj);
  const double hi = std::max(ci, cj);
  // x = r - 1 with r = hi/lo; hi - lo is exact when the two are close.
  const double x = (hi - lo) / lo;
  if (x < 1e-4) return lo * (1.0 + x / 2.0 - x * x / 12.0 + x * x * x / 24.0);
  return lo * x / std::log1p(x);
}

double exp_divided_difference(double a, double b) {
  const double lo = std::min(a, b);
  const double d = std::max(a, b) - lo;
  if (d < 1e-4) return std::exp(lo) * (1.0 + d / 2.0 + d * d / 6.0 + d * d * d / 24.0);
  return std::exp(lo) * std::expm1(d) / d;
}

HermitianMatrix scrambled_multiply(const HermitianMatrix& c, const HermitianMatrix& delta) {
  require_same_dim(c, delta, "scrambled_multiply");
  const EigDecomposition e = positive_eig(c, "scrambled_multiply");
  const RealVector& w = e.eigenvalues;
  return eigenbasis_scale(e, delta, [&](Index i, Index j) { return logarithmic_mean(w(i), w(j)); });
}

HermitianMatrix scrambled_divide(const HermitianMatrix& a, const HermitianMatrix& delta) {
  require_same_dim(a, delta, "scrambled_divide");
  const EigDecomposition e = positive_eig(a, "scrambled_divide");
  const RealVector& w = e.eigenvalues;
  return eigenbasis_scale(e, delta,
                          [&](Index i, Index j) { return 1.0 / logarithmic_mean(w(i), w(j)); });
}

HermitianMatrix frechet_exp(const HermitianMatrix& a, const HermitianMatrix& delta) {
  require_same_dim(a, delta, "frechet_exp");
  // Eigenvalues of exp(A) are e^{a_i}; use the exponent directly instead of
  // re-deriving it through a logarithm.
  const EigDecomposition e = eig(a);
  const RealVector& w = e.eigenvalues;
  return eigenbasis_scale(e, delta,
                          [&](Index i, Index j) { return exp_divided_difference(w(i), w(j)); });
}

HermitianMatrix frechet_log(const HermitianMatrix& a, const HermitianMatrix& delta) {
  return scrambled_divide(a, delta);
}

double default_positivity_floor(const HermitianMatrix& m) { return 1e-12 * m.norm(); }

double min_eigenvalue(const HermitianMatrix& m) {
  if (m.dim() == 1) return m(0, 0).real();
  if (!m.matrix().allFinite()) throw NumericalError("min_eigenvalue: non-finite input");
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(m.matrix(), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("min_eigenvalue: failed");
  return solver.eigenvalues()(0);
}

double assert_positive_definite(const HermitianMatrix& m, double floor) {
  const double w = min_eigenvalue(m);
  if (!(w > floor)) {
    std::ostringstream os;
    os << "matrix is not positive definite: min eigenvalue " << w << " <= floor " << floor;
    throw PositivityError(os.str(), w);
  }
  return w;
}

double assert_positive_definite(const HermitianMatrix& m) {
  return assert_positive_definite(m, default_positivity_floor(m));
}

double inner(const ComplexMatrix& x, const ComplexMatrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw DimensionError("inner: shape mismatch");
  // Re trace(X* Y) = sum Re(conj(x_ij) y_ij)
  double s = 0.0;
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < x.rows(); ++i) s += (std::conj(x(i, j)) * y(i, j)).real();
  return s;
}

}  // namespace qmoment
