#pragma once

// Dense Hermitian matrix calculus: spectral functions, the "scrambled"
// multiplication operator M_C(D) = int_0^1 C^(1-t) D C^t dt, its inverse,
// and the Frechet derivatives of exp and log expressed through them.

#include <complex>

#include <Eigen/Dense>

#include "qmoment/errors.hpp"

namespace qmoment {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Relative tolerance on ||M - M*|| below which a matrix is accepted as Hermitian.
inline constexpr double kHermitianTolerance = 1e-12;

/// Square complex matrix with M = M*.
///
/// Construction from a general matrix symmetrizes to (M + M*)/2 when the
/// defect is at most 1e-12 ||M|| and throws HermiticityError otherwise.
class HermitianMatrix {
 public:
  HermitianMatrix() = default;
  explicit HermitianMatrix(const ComplexMatrix& m);

  static HermitianMatrix zero(Index dim);
  static HermitianMatrix identity(Index dim);
  static HermitianMatrix diagonal(const RealVector& diag);

  const ComplexMatrix& matrix() const noexcept { return m_; }
  Index dim() const noexcept { return m_.rows(); }
  Complex operator()(Index i, Index j) const { return m_(i, j); }

  double trace() const { return m_.trace().real(); }
  double norm() const { return m_.norm(); }

  HermitianMatrix operator+(const HermitianMatrix& o) const;
  HermitianMatrix operator-(const HermitianMatrix& o) const;
  HermitianMatrix operator*(double s) const;
  friend HermitianMatrix operator*(double s, const HermitianMatrix& h) { return h * s; }

  /// Wraps a matrix already known to be exactly Hermitian (e.g. produced by
  /// U diag(w) U* with the diagonal forced real). Only the triangle
  /// consistency is restored; no tolerance check is made.
  static HermitianMatrix trusted(ComplexMatrix m);

 private:
  ComplexMatrix m_;
};

/// Eigen-pairs of a Hermitian matrix: ascending eigenvalues and a unitary U.
struct EigDecomposition {
  RealVector eigenvalues;
  ComplexMatrix eigenvectors;

  /// U diag(f(w)) U*.
  template <class F>
  HermitianMatrix apply(F&& f) const {
    RealVector fw = eigenvalues.unaryExpr(f);
    return HermitianMatrix::trusted(eigenvectors * fw.asDiagonal() * eigenvectors.adjoint());
  }
};

/// Shared eigendecomposition routine used by every spectral function.
EigDecomposition eig(const HermitianMatrix& h);

/// (M + M*)/2 of a square matrix.
HermitianMatrix hermitian_part(const ComplexMatrix& m);

HermitianMatrix matrix_exp(const HermitianMatrix& h);
HermitianMatrix matrix_log(const HermitianMatrix& p);
HermitianMatrix matrix_sqrt(const HermitianMatrix& p);
HermitianMatrix matrix_inverse(const HermitianMatrix& p);

/// M_C(D): in C's eigenbasis entry (i,j) of D is scaled by the logarithmic
/// mean (c_i - c_j)/(log c_i - log c_j), the diagonal by c_i.
HermitianMatrix scrambled_multiply(const HermitianMatrix& c, const HermitianMatrix& delta);

/// M_A^{-1}(D) = int_0^inf (A + tI)^{-1} D (A + tI)^{-1} dt.
HermitianMatrix scrambled_divide(const HermitianMatrix& a, const HermitianMatrix& delta);

/// d/de exp(A + e D) at e = 0, i.e. M_{exp A}(D).
HermitianMatrix frechet_exp(const HermitianMatrix& a, const HermitianMatrix& delta);

/// d/de log(A + e D) at e = 0, i.e. M_A^{-1}(D).
HermitianMatrix frechet_log(const HermitianMatrix& a, const HermitianMatrix& delta);

/// Default relative positivity floor: 1e-12 ||M||.
double default_positivity_floor(const HermitianMatrix& m);

/// Smallest eigenvalue of m; throws PositivityError unless it exceeds floor.
double assert_positive_definite(const HermitianMatrix& m, double floor);
double assert_positive_definite(const HermitianMatrix& m);

/// Smallest eigenvalue (no check).
double min_eigenvalue(const HermitianMatrix& m);

/// Logarithmic mean (c_i - c_j)/(log c_i - log c_j) of two positive numbers,
/// equal to c when c_i = c_j = c.
double logarithmic_mean(double ci, double cj);

/// Divided difference (e^a - e^b)/(a - b), equal to e^a when a = b.
double exp_divided_difference(double a, double b);

/// Re trace(X* Y); the real inner product on complex matrices.
double inner(const ComplexMatrix& x, const ComplexMatrix& y);

}  // namespace qmoment
