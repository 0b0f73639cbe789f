#pragma once

#include <vector>

namespace qmoment {

/// Gauss-Legendre rule on [-1, 1].
struct GaussLegendreRule {
  std::vector<double> nodes;    // ascending
  std::vector<double> weights;
};

/// Nodes and weights of the order-point Gauss-Legendre rule (order >= 1),
/// computed by Newton iteration on the Legendre polynomial.
GaussLegendreRule gauss_legendre(int order);

/// Composite rule: [lower, upper] split into equal panels, each carrying an
/// order-point Gauss-Legendre rule. Exact for polynomials of degree
/// 2*order - 1 on every panel.
GaussLegendreRule composite_gauss_legendre(double lower, double upper, int panels, int order);

}  // namespace qmoment
