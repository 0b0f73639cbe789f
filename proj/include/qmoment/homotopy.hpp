#pragma once

// Entropy-extremal density families parametrized by a dual variable, their
// moment maps and Jacobians in range-basis coordinates, and the homotopy
// solvers that drive the moments of the family to a target R.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qmoment/moment_operator.hpp"

namespace qmoment {

/// rho = (L* lambda)^{-1}
struct RationalFamily {};
/// rho = (1/e) exp(-L* lambda)
struct ExponentialFamily {};
/// rho = phi (L* lambda)^{-1} phi*, phi nonsingular per node, not necessarily Hermitian.
struct WeightedRationalFamily {
  std::vector<ComplexMatrix> phi;
  /// phi = sigma^{1/2}, so that rho = sigma at a lambda with L* lambda = I.
  static WeightedRationalFamily from_sigma(const MatrixDensity& sigma);
};
/// rho = (1/e) sigma^{1/2} exp(-L* lambda) sigma^{1/2}
struct WeightedExponentialFamily {
  MatrixDensity sigma;
};
/// rho = (1/e) exp(log sigma - L* lambda)
struct PriorExponentialFamily {
  MatrixDensity sigma;
};

using Family = std::variant<RationalFamily, ExponentialFamily, WeightedRationalFamily,
                            WeightedExponentialFamily, PriorExponentialFamily>;

std::string family_name(const Family& family);
/// True for the rational and weighted-rational kinds, which need L* lambda > 0.
bool is_rational_kind(const Family& family);

struct SolveConfig {
  double tol = 1e-10;          // on V = ||R - h(lambda)||^2
  double t_max = 60.0;
  double h0 = 0.1;
  double h_min = 1e-12;
  double pos_floor = 1e-10;    // relative to the grid mean eigenvalue of L* lambda
  double lambda_max = 1e8;
  double range_residual_tol = 1e-8;
  bool newton_polish = true;
  bool torus_override = false;

  /// Throws std::invalid_argument unless every parameter is positive and tol < 1.
  void validate() const;
};

enum class SolveStatus { Converged, DivergedUnbounded, DivergedBoundary, NotInRange, MaxTimeExceeded };

std::string status_name(SolveStatus status);
inline bool is_divergence(SolveStatus s) {
  return s == SolveStatus::DivergedUnbounded || s == SolveStatus::DivergedBoundary ||
         s == SolveStatus::MaxTimeExceeded;
}

struct TracePoint {
  double t = 0.0;
  double V = 0.0;
  double min_eig = 0.0;      // min over nodes of min-eig(L* lambda)
  double lambda_norm = 0.0;
};

struct SolveReport {
  SolveStatus status = SolveStatus::MaxTimeExceeded;
  DualVariable lambda_hat;
  MatrixDensity density;     // filled when Converged
  double V_final = std::numeric_limits<double>::quiet_NaN();
  std::vector<TracePoint> trace;
  double entropy_value = std::numeric_limits<double>::quiet_NaN();
  /// NaN when no converged tail is available (divergence, tau-form).
  double fitted_V_slope = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;        // accepted integrator steps
  int rejected_steps = 0;
  int newton_iterations = 0;
  double burg_entropy = std::numeric_limits<double>::quiet_NaN();
  double vonneumann_entropy = std::numeric_limits<double>::quiet_NaN();
  double duality_pairing = std::numeric_limits<double>::quiet_NaN();  // <lambda, L(rho)>
  double range_residual = 0.0;
  std::string message;
};

/// Density of the family at lambda. Rational kinds throw PositivityError when
/// some node has min-eig(L* lambda) <= pos_floor times the grid mean eigenvalue.
MatrixDensity family_density(const MomentOperator& op, const DualVariable& lambda,
                             const Family& family, double pos_floor = 0.0);

/// L(family_density(lambda)).
ComplexMatrix h_map(const MomentOperator& op, const DualVariable& lambda, const Family& family);

enum class Definiteness { Negative, General };

struct JacobianResult {
  /// J_ij = <E_i, dh/d lambda_j>, the derivative of the moment coordinates.
  RealMatrix J;
  /// Negative: symmetric negative definite (unweighted kinds, or m = 1).
  /// General: weighted matrix kinds, where J need not be symmetric.
  Definiteness tag = Definiteness::Negative;
};

JacobianResult jacobian(const MomentOperator& op, const DualVariable& lambda, const Family& family);

/// Exponential kinds: zero. Rational kinds: least-squares fit of L*(lambda) to
/// the identity over the grid, accepted only if dual feasible.
DualVariable default_dual_start(const MomentOperator& op, const Family& family);

/// Feedback form d lambda/dt = J^{-1}(R - h(lambda)), integrated by RK4.
SolveReport solve(const MomentOperator& op, const ComplexMatrix& R, const Family& family,
                  const SolveConfig& config = {}, const std::optional<DualVariable>& start = std::nullopt);

/// Homotopy form d lambda/d tau = J^{-1}(R - R0) on [0, 1], R0 = h(lambda0),
/// with an RK4 predictor and a Newton corrector on h(lambda) = R0 + tau (R - R0).
SolveReport solve_tau(const MomentOperator& op, const ComplexMatrix& R, const Family& family,
                      const SolveConfig& config = {},
                      const std::optional<DualVariable>& start = std::nullopt);

/// Least-squares slope of log V against t over the decreasing tail of a
/// converged trace (points with V > 1e-13). Throws std::invalid_argument with
/// fewer than 10 such points or when the trace never gets below V = 1e-8.
double lyapunov_slope(const std::vector<TracePoint>& trace);

}  // namespace qmoment
