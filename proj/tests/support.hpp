#pragma once

#include <cmath>
#include <functional>

#include "qmoment/hermitian.hpp"
#include "qmoment/homotopy.hpp"
#include "qmoment/problems.hpp"

namespace qtest {

using namespace qmoment;

inline ComplexMatrix random_complex(UniformStream& rng, Index rows, Index cols) {
  ComplexMatrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = Complex(rng.next(-1.0, 1.0), rng.next(-1.0, 1.0));
  return m;
}

/// Hermitian with Frobenius norm `norm`.
inline HermitianMatrix random_hermitian(UniformStream& rng, Index n, double norm = 1.0) {
  const ComplexMatrix x = random_complex(rng, n, n);
  const ComplexMatrix h = 0.5 * (x + x.adjoint());
  return HermitianMatrix(h * (norm / h.norm()));
}

/// X* X + shift I.
inline HermitianMatrix random_hpd(UniformStream& rng, Index n, double shift = 0.1) {
  const ComplexMatrix x = random_complex(rng, n, n);
  return HermitianMatrix(ComplexMatrix(x.adjoint() * x + shift * ComplexMatrix::Identity(n, n)));
}

/// Power of an HPD matrix computed with Eigen directly.
inline ComplexMatrix hpd_power(const ComplexMatrix& c, double s) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(c);
  const Eigen::VectorXd w = es.eigenvalues().array().pow(s);
  return es.eigenvectors() * w.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
}

/// Composite Simpson rule with `intervals` (even) subintervals.
inline ComplexMatrix simpson(const std::function<ComplexMatrix(double)>& f, double a, double b, int intervals) {
  const double h = (b - a) / intervals;
  ComplexMatrix acc = f(a) + f(b);
  for (int k = 1; k < intervals; ++k) acc += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
  return acc * (h / 3.0);
}

inline double rel_err(const ComplexMatrix& a, const ComplexMatrix& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

/// Bessel J0 by the integral (1/pi) int_0^pi cos(x sin t) dt with composite Simpson.
inline double bessel_j0(double x) {
  const int n = 20000;
  const double h = std::acos(-1.0) / n;
  double s = std::cos(0.0) + std::cos(x * std::sin(std::acos(-1.0)));
  for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * std::cos(x * std::sin(k * h));
  return s * h / 3.0 / std::acos(-1.0);
}

/// Central differences of the range coordinates of h, column by column. The
/// step along E_c is scaled so that the change in L*(lambda) has sup norm
/// rel_step times that of L*(lambda); weak basis directions otherwise drown in
/// the rounding error of h.
inline RealMatrix fd_jacobian(const MomentOperator& op, const DualVariable& lam, const Family& fam,
                              double rel_step = 1e-4) {
  const Index d = op.range_dim();
  double s_lam = 0.0;
  for (std::size_t j = 0; j < op.node_count(); ++j) s_lam = std::max(s_lam, op.adjoint_at(j, lam.coords).norm());
  RealMatrix jac(d, d);
  for (Index c = 0; c < d; ++c) {
    double s_c = 0.0;
    for (std::size_t j = 0; j < op.node_count(); ++j) s_c = std::max(s_c, op.adjoint_basis(j, c).norm());
    const double eps = rel_step * s_lam / s_c;
    RealVector up = lam.coords, dn = lam.coords;
    up(c) += eps;
    dn(c) -= eps;
    jac.col(c) = (op.project(h_map(op, op.dual(up), fam)).coords - op.project(h_map(op, op.dual(dn), fam)).coords) /
                 (2.0 * eps);
  }
  return jac;
}

/// max over columns of ||a_c - b_c|| / ||b_c||.
inline double max_column_rel_err(const RealMatrix& a, const RealMatrix& b) {
  double worst = 0.0;
  for (Index c = 0; c < b.cols(); ++c) worst = std::max(worst, (a.col(c) - b.col(c)).norm() / b.col(c).norm());
  return worst;
}

}  // namespace qtest
