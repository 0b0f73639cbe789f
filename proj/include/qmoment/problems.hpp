#pragma once

// Ready-made moment operators for sensor arrays, two-dimensional covariance
// samples, partial traces and state covariances, plus synthetic densities
// and the admissibility checks that go with each setting.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "qmoment/moment_operator.hpp"

namespace qmoment {

// ------------------------------------------------------------ sensor arrays

/// Sensor positions in wavelengths (first must be 0) and the wavenumber p.
struct ArraySpec {
  std::vector<double> positions = default_positions();
  double wavenumber = 1.0;
  SupportGrid grid;  // 1-D on [0, pi]

  static std::vector<double> default_positions();
  /// Default positions on a 32 x 5 Gauss-Legendre grid over [0, pi].
  static ArraySpec standard();
};

/// Distinct non-negative pairwise differences, ascending, deduplicated at 1e-12.
std::vector<double> array_difference_set(const std::vector<double>& positions);

/// Column manifold G(t)_l = exp(+j p x_l cos t) on the left and its adjoint on
/// the right, so that L(rho)(a, b) = R_{x_b - x_a} with
/// R_k = int exp(-j p k cos t) rho(t) dt.
MomentOperator nonequispaced_array_problem(const ArraySpec& spec);

struct NecessaryCheck {
  HermitianMatrix matrix;
  double min_eigenvalue = 0.0;
  bool psd = false;
};

/// Moment values keyed by index difference; the default array needs
/// 0, 1, sqrt(2) and 1 + sqrt(2).
using ArrayMoments = std::map<double, Complex>;

/// Reads R_k off a moment matrix of the default array.
ArrayMoments array_moments(const ComplexMatrix& R);

/// [[R0, R1, Rs+1], [conj R1, R0, Rs], [conj Rs+1, conj Rs, R0]], s = sqrt(2);
/// verdict psd when min-eig >= -1e-12 R0. Throws std::invalid_argument on a missing key.
NecessaryCheck array_necessary_matrix(const ArrayMoments& values);

// -------------------------------------------------------- two-dimensional grid

/// G_left = [exp(j k t)]_k as a column, G_right = [exp(j l s)]_l as a row, so
/// that L(rho)_{k,l} = int exp(j (k t + l s)) rho(t, s) dt ds, 0 <= k, l <= n.
MomentOperator grid2d_problem(int n, const SupportGrid& grid);

// ----------------------------------------------------------- partial trace

/// Discrete grid of d_B nodes with G_k = I_{d_A} (x) e_k^T, so L(rho) = trace_B(rho).
MomentOperator partial_trace_problem(int d_a, int d_b);
HermitianMatrix bell_state();

// ------------------------------------------------------- state covariance

struct StateSpaceModel {
  ComplexMatrix A;  // n x n
  ComplexMatrix B;  // n x m
  std::optional<ComplexMatrix> C_o;  // m x n feedback gain

  Index n() const { return A.rows(); }
  Index m() const { return B.cols(); }
  /// Throws std::invalid_argument unless A (and A - B C_o) have spectral
  /// radius below 1 - 1e-8 and (A, B) is controllable.
  void validate() const;
};

double spectral_radius(const ComplexMatrix& a);

/// Seeded complex (A, B) with A scaled to the given spectral radius; retried
/// until (A, B) is controllable.
StateSpaceModel random_state_model(Index n, Index m, std::uint64_t seed, double radius = 0.7);

/// Symmetric kernels G(t) = (2 pi)^{-1/2} (I - e^{jt} A)^{-1} B on a grid over
/// [-pi, pi], so L(rho) = int G rho G* dt / (2 pi).
MomentOperator state_cov_problem(const StateSpaceModel& model, const SupportGrid& grid);

struct StateCovarianceCheck {
  bool rank_ok = false;
  Index rank = 0;
  ComplexMatrix H;  // m x n, minimum-norm solution of R - A R A* = B H + H* B*
  double sylvester_residual = 0.0;
};

StateCovarianceCheck validate_state_covariance(const ComplexMatrix& R, const StateSpaceModel& model);

/// F(z) = int (1 + z e^{jt}) / (1 - z e^{jt}) rho(t) dt / (2 pi) by quadrature,
/// for |z| <= 1 - 1e-6. The Poisson peak sits at t = -arg z, so the real part
/// of F(r e^{-jt}) tends to rho(t) as r -> 1.
ComplexMatrix herglotz_interpolant(const MatrixDensity& rho, const SupportGrid& grid, Complex z);

struct FeedbackFactor {
  std::vector<ComplexMatrix> G_o;   // (2 pi)^{-1/2} (I - e^{jt}(A - B C_o))^{-1} B
  std::vector<ComplexMatrix> phi;   // I + C_o e^{jt} (I - e^{jt} A)^{-1} B
  double identity_residual = 0.0;   // max_j rel. || phi (G* l G)^{-1} phi* - (G_o* l G_o)^{-1} ||
  Index degree_bound = 0;           // 2 n
};

FeedbackFactor feedback_spectral_factor(const StateSpaceModel& model, const ComplexMatrix& lambda,
                                        const SupportGrid& grid);

// ------------------------------------------------------ synthetic densities

struct Bump {
  std::vector<double> center;  // one entry per axis
  std::vector<double> width;
  double height = 0.0;
};

/// Indicator of [lower, upper) along the first axis.
struct Step {
  double lower = 0.0;
  double upper = 0.0;
  double height = 0.0;
};

/// s(t) = baseline + sum of Gaussian bumps + sum of steps.
struct ScalarProfile {
  double baseline = 1.0;
  std::vector<Bump> bumps;
  std::vector<Step> steps;
  double value(std::span<const double> t) const;
};

/// rho(t) = s(t) F(t) F(t)*, F = I + kappa K(t), ||K(t)||_2 <= 1, where K is a
/// seeded trigonometric matrix polynomial in the first coordinate. With
/// kappa = 0 this is s(t) I_m.
struct DensitySpec {
  ScalarProfile profile;
  Index m = 1;
  double congruence = 0.0;  // kappa in [0, 1)
  std::uint64_t seed = 0;

  static DensitySpec constant(double value, Index m = 1);
};

/// Two bumps and a step on [0, pi] used by the array demonstrations.
DensitySpec figure_density();

MatrixDensity synth_density(const DensitySpec& spec, const SupportGrid& grid);

/// Uniform doubles in [0, 1) built from the top 53 bits of mt19937_64, whose
/// output sequence is fixed by the standard (unlike the library distributions).
class UniformStream {
 public:
  explicit UniformStream(std::uint64_t seed) : gen_(seed) {}
  double next() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double next(double lo, double hi) { return lo + (hi - lo) * next(); }

 private:
  std::mt19937_64 gen_;
};

/// Fixed-gain constant-kernel operator on one node: G_left = G_right = I_m.
MomentOperator identity_problem(Index m);

/// Scalar kernel G = 1 on a grid over [lower, upper].
MomentOperator scalar_problem(const SupportGrid& grid);

}  // namespace qmoment
