#pragma once

// The moment map L(rho) = sum_j w_j G_left(t_j) rho(t_j) G_right(t_j), its
// adjoint, the range space with a real orthonormal basis, and entropy
// functionals on grid-sampled matrix densities.

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "qmoment/hermitian.hpp"

namespace qmoment {

enum class GridKind { Interval1d, Rectangle2d, Discrete };

struct Bounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Quadrature discretization of the support set.
///
/// Interval and rectangle grids are composite Gauss-Legendre (tensor product
/// in 2-D); their weights sum to the geometric measure. Discrete grids carry
/// index nodes 0..n-1 with unit weights.
class SupportGrid {
 public:
  SupportGrid() = default;

  /// Composite Gauss-Legendre grid; panels >= 1 and order in [2, 10] per axis.
  static SupportGrid build(GridKind kind, std::vector<Bounds> bounds, int panels, int order);
  static SupportGrid discrete(std::size_t count);
  /// Explicit nodes (row-major, coord_dim values per node) and weights.
  static SupportGrid from_samples(GridKind kind, std::vector<Bounds> bounds,
                                  std::vector<double> coords, std::vector<double> weights);

  GridKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return weights_.size(); }
  /// Geometric dimension of the support: 1 or 2, and 0 for discrete grids.
  int dimension() const noexcept;
  /// Number of coordinates stored per node (1 for discrete index nodes).
  int coord_dim() const noexcept { return coord_dim_; }
  std::span<const double> node(std::size_t j) const {
    return {coords_.data() + j * coord_dim_, static_cast<std::size_t>(coord_dim_)};
  }
  double weight(std::size_t j) const { return weights_[j]; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<double>& coords() const noexcept { return coords_; }
  const std::vector<Bounds>& bounds() const noexcept { return bounds_; }
  double measure() const noexcept { return measure_; }
  int panels() const noexcept { return panels_; }
  int order() const noexcept { return order_; }

 private:
  GridKind kind_ = GridKind::Discrete;
  int coord_dim_ = 1;
  std::vector<double> coords_;
  std::vector<double> weights_;
  std::vector<Bounds> bounds_;
  double measure_ = 0.0;
  int panels_ = 0;
  int order_ = 0;
};

SupportGrid build_grid(GridKind kind, std::vector<Bounds> bounds, int panels, int order);

/// Kernel values G_left (n_left x m) and G_right (m x n_right) at every node.
class KernelSamples {
 public:
  KernelSamples() = default;
  KernelSamples(std::vector<ComplexMatrix> left, std::vector<ComplexMatrix> right);
  /// G_right = G_left* at every node.
  static KernelSamples symmetric(std::vector<ComplexMatrix> left);

  Index n_left() const noexcept { return n_left_; }
  Index n_right() const noexcept { return n_right_; }
  Index m() const noexcept { return m_; }
  std::size_t size() const noexcept { return left_.size(); }
  bool is_symmetric() const noexcept { return symmetric_; }
  const ComplexMatrix& left(std::size_t j) const { return left_[j]; }
  const ComplexMatrix& right(std::size_t j) const { return right_[j]; }

 private:
  Index n_left_ = 0, n_right_ = 0, m_ = 0;
  std::vector<ComplexMatrix> left_, right_;
  bool symmetric_ = false;
};

/// Orthonormal basis of the range space under <X, Y> = Re trace(X* Y).
struct RangeBasis {
  std::vector<ComplexMatrix> elements;
  Index dim() const noexcept { return static_cast<Index>(elements.size()); }
};

/// Grid-sampled Hermitian matrix density, one sample per node.
struct MatrixDensity {
  std::vector<HermitianMatrix> samples;

  static MatrixDensity constant(std::size_t nodes, const HermitianMatrix& value);
  std::size_t size() const noexcept { return samples.size(); }
  Index dim() const noexcept { return samples.empty() ? 0 : samples.front().dim(); }
  const HermitianMatrix& operator[](std::size_t j) const { return samples[j]; }
  /// Smallest eigenvalue over all nodes.
  double min_eigenvalue() const;
  bool is_positive() const { return min_eigenvalue() > 0.0; }
  /// max_j ||a_j - b_j|| / max_j ||a_j||, Frobenius norm per node.
  static double sup_relative_difference(const MatrixDensity& a, const MatrixDensity& b);
};

/// Dual variable expressed in range-basis coordinates, with its matrix
/// sum_i coords_i E_i.
struct DualVariable {
  RealVector coords;
  ComplexMatrix matrix;
};

/// Coordinates of a moment matrix in the range basis and the norm of the
/// component orthogonal to the range.
struct Projection {
  RealVector coords;
  double residual = 0.0;
};

struct FeasibilityResult {
  bool feasible = false;
  double min_eigenvalue = 0.0;
  std::size_t argmin_node = 0;
};

/// Relative singular-value threshold for the numerical rank of the range.
inline constexpr double kRangeRankThreshold = 1e-10;

RangeBasis compute_range_basis(const SupportGrid& grid, const KernelSamples& kernels);

/// Immutable moment operator on a grid. The adjoint images L*(E_i) of the
/// basis elements are sampled once at construction.
class MomentOperator {
 public:
  MomentOperator(SupportGrid grid, KernelSamples kernels);

  const SupportGrid& grid() const noexcept { return grid_; }
  const KernelSamples& kernels() const noexcept { return kernels_; }
  const RangeBasis& basis() const noexcept { return basis_; }
  Index range_dim() const noexcept { return basis_.dim(); }
  Index m() const noexcept { return kernels_.m(); }
  Index n_left() const noexcept { return kernels_.n_left(); }
  Index n_right() const noexcept { return kernels_.n_right(); }
  std::size_t node_count() const noexcept { return grid_.size(); }

  /// L*(E_i) at node j.
  const ComplexMatrix& adjoint_basis(std::size_t node, Index i) const {
    return adjoint_basis_[node * static_cast<std::size_t>(basis_.dim()) + static_cast<std::size_t>(i)];
  }

  ComplexMatrix apply(const MatrixDensity& rho) const;
  MatrixDensity adjoint(const ComplexMatrix& lambda) const;
  MatrixDensity adjoint(const DualVariable& lambda) const;
  /// The images L*(E_i) at one node as the columns of an m^2 x d matrix,
  /// each column-major vectorized.
  const ComplexMatrix& adjoint_stack(std::size_t node) const { return adjoint_stack_[node]; }

  /// L*(lambda) at one node, from range coordinates.
  ComplexMatrix adjoint_at(std::size_t node, const RealVector& coords) const;

  /// <E_k, L(rho)> for every k, computed through the adjoint images.
  RealVector range_coordinates(const MatrixDensity& rho) const;
  DualVariable dual(const RealVector& coords) const;
  /// Dual variable from an arbitrary matrix by projection onto the range.
  DualVariable dual_from_matrix(const ComplexMatrix& lambda) const;
  Projection project(const ComplexMatrix& r) const;

 private:
  void check_density(const MatrixDensity& rho, const char* what) const;

  SupportGrid grid_;
  KernelSamples kernels_;
  RangeBasis basis_;
  std::vector<ComplexMatrix> adjoint_basis_;
  std::vector<ComplexMatrix> adjoint_stack_;
};

ComplexMatrix apply_L(const MomentOperator& op, const MatrixDensity& rho);
MatrixDensity apply_L_adjoint(const MomentOperator& op, const DualVariable& lambda);
Projection project_to_range(const MomentOperator& op, const ComplexMatrix& r);
FeasibilityResult is_dual_feasible(const MomentOperator& op, const DualVariable& lambda,
                                   double floor = 0.0);
/// <lambda, R>.
double functional_C(const MomentOperator& op, const ComplexMatrix& r, const DualVariable& lambda);

/// S(I || rho) = -sum_j w_j trace log rho_j.
struct BurgEntropy {};
/// S(rho || I) = sum_j w_j trace(rho_j log rho_j).
struct VonNeumannEntropy {};
/// S(rho || sigma) = sum_j w_j trace(rho_j log rho_j - rho_j log sigma_j).
struct RelativeEntropy {
  MatrixDensity sigma;
};
using EntropyKind = std::variant<BurgEntropy, VonNeumannEntropy, RelativeEntropy>;

/// Quadrature value of the chosen entropy. Throws PositivityError (with the
/// node index) if rho, or sigma for the relative kind, is not positive.
double entropy(const MatrixDensity& rho, const SupportGrid& grid, const EntropyKind& kind);

/// sum_j w_j trace(X_j Y_j), the inner product on densities.
double density_inner(const MatrixDensity& x, const MatrixDensity& y, const SupportGrid& grid);

}  // namespace qmoment
