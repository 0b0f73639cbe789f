#include <numbers>

#include "doctest.h"
#include "qmoment/quadrature.hpp"
#include "support.hpp"

using namespace qmoment;

namespace {

constexpr double kPi = std::numbers::pi;

MatrixDensity random_density(UniformStream& rng, std::size_t nodes, Index m) {
  MatrixDensity d;
  for (std::size_t j = 0; j < nodes; ++j) d.samples.push_back(qtest::random_hpd(rng, m, 0.2));
  return d;
}

MatrixDensity random_hermitian_density(UniformStream& rng, std::size_t nodes, Index m) {
  MatrixDensity d;
  for (std::size_t j = 0; j < nodes; ++j) d.samples.push_back(qtest::random_hermitian(rng, m, rng.next(0.1, 2.0)));
  return d;
}

MomentOperator array_op() { return nonequispaced_array_problem(ArraySpec::standard()); }

// Rank of the generator family w_j G_l H G_r computed independently with JacobiSVD.
Index generator_rank(const MomentOperator& op) {
  const Index m = op.m(), nl = op.n_left(), nr = op.n_right();
  std::vector<ComplexMatrix> units;
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b < m; ++b) {
      ComplexMatrix re = ComplexMatrix::Zero(m, m), im = ComplexMatrix::Zero(m, m);
      re(a, b) = re(b, a) = 1.0;
      im(a, b) = Complex(0, 1);
      im(b, a) = Complex(0, -1);
      units.push_back(re);
      if (a != b) units.push_back(im);
    }
  RealMatrix gen(2 * nl * nr, static_cast<Index>(op.node_count() * units.size()));
  Index col = 0;
  for (std::size_t j = 0; j < op.node_count(); ++j)
    for (const ComplexMatrix& u : units) {
      const ComplexMatrix g = op.grid().weight(j) * op.kernels().left(j) * u * op.kernels().right(j);
      for (Index e = 0; e < nl * nr; ++e) {
        gen(2 * e, col) = g(e / nr, e % nr).real();
        gen(2 * e + 1, col) = g(e / nr, e % nr).imag();
      }
      ++col;
    }
  Eigen::JacobiSVD<RealMatrix> svd(gen);
  const RealVector sv = svd.singularValues();
  Index r = 0;
  while (r < sv.size() && sv(r) > 1e-10 * sv(0)) ++r;
  return r;
}

}  // namespace

TEST_SUITE("quadrature") {
  TEST_CASE("Gauss-Legendre rules integrate polynomials of degree 2q-1 exactly on every panel") {
    for (int q = 2; q <= 10; ++q) {
      const GaussLegendreRule r = composite_gauss_legendre(-1.0, 2.0, 3, q);
      CHECK(r.nodes.size() == static_cast<std::size_t>(3 * q));
      const int deg = 2 * q - 1;
      double s = 0.0;
      for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * (std::pow(r.nodes[i], deg) + 1.0);
      const double exact = (std::pow(2.0, deg + 1) - std::pow(-1.0, deg + 1)) / (deg + 1) + 3.0;
      CHECK(s == doctest::Approx(exact).epsilon(1e-12));
    }
  }

  TEST_CASE("rules are symmetric with ascending nodes") {
    const GaussLegendreRule r = gauss_legendre(7);
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(r.nodes[i] == doctest::Approx(-r.nodes[6 - i]).epsilon(1e-15));
      CHECK(r.weights[i] == doctest::Approx(r.weights[6 - i]).epsilon(1e-15));
      if (i) CHECK(r.nodes[i - 1] < r.nodes[i]);
    }
    CHECK(std::abs(r.nodes[3]) < 1e-15);
  }
}

TEST_SUITE("support grid") {
  TEST_CASE("build_grid examples") {
    const SupportGrid g = build_grid(GridKind::Interval1d, {{0.0, 1.0}}, 1, 2);
    CHECK(g.size() == 2);
    CHECK(g.weight(0) + g.weight(1) == doctest::Approx(1.0).epsilon(1e-15));

    const SupportGrid s = build_grid(GridKind::Interval1d, {{0.0, kPi}}, 8, 5);
    double integral = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) integral += s.weight(j) * std::sin(s.node(j)[0]);
    CHECK(std::abs(integral - 2.0) <= 1e-12);

    const SupportGrid r = build_grid(GridKind::Rectangle2d, {{0.0, kPi}, {0.0, kPi}}, 4, 3);
    double total = 0.0;
    for (double w : r.weights()) total += w;
    CHECK(std::abs(total - kPi * kPi) <= 1e-12 * kPi * kPi);
    CHECK(r.measure() == doctest::Approx(kPi * kPi));
    CHECK(r.size() == 144);
    CHECK(r.dimension() == 2);
    for (std::size_t j = 0; j < r.size(); ++j) {
      CHECK(r.node(j)[0] >= 0.0);
      CHECK(r.node(j)[1] <= kPi);
    }
  }

  TEST_CASE("build_grid rejects invalid input") {
    CHECK_THROWS_AS(build_grid(GridKind::Interval1d, {{0.0, 1.0}}, 0, 3), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(GridKind::Interval1d, {{0.0, 1.0}}, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(GridKind::Interval1d, {{0.0, 1.0}}, 2, 11), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(GridKind::Interval1d, {{1.0, 0.0}}, 2, 3), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(GridKind::Interval1d, {{0.0, INFINITY}}, 2, 3), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(GridKind::Rectangle2d, {{0.0, 1.0}}, 2, 3), std::invalid_argument);
  }

  TEST_CASE("discrete and explicit grids") {
    const SupportGrid d = SupportGrid::discrete(3);
    CHECK(d.size() == 3);
    CHECK(d.measure() == 3.0);
    CHECK(d.dimension() == 0);
    CHECK_THROWS_AS(SupportGrid::from_samples(GridKind::Interval1d, {{0.0, 1.0}}, {0.5, 2.0}, {0.5, 0.5}),
                    std::invalid_argument);
    CHECK_THROWS_AS(SupportGrid::from_samples(GridKind::Interval1d, {{0.0, 1.0}}, {0.5}, {-1.0}),
                    std::invalid_argument);
  }
}

TEST_SUITE("moment operator") {
  TEST_CASE("apply_L on a single identity node returns the density") {
    UniformStream rng(1);
    const MomentOperator op = identity_problem(3);
    const HermitianMatrix p = qtest::random_hpd(rng, 3);
    CHECK(qtest::rel_err(op.apply(MatrixDensity::constant(1, p)), p.matrix()) < 1e-15);
    CHECK_THROWS_AS(op.apply(MatrixDensity::constant(2, p)), DimensionError);
    CHECK_THROWS_AS(op.apply(MatrixDensity::constant(1, HermitianMatrix::identity(2))), DimensionError);
  }

  TEST_CASE("array kernel against a constant density gives Bessel values") {
    const MomentOperator op = array_op();
    const MatrixDensity rho = MatrixDensity::constant(op.node_count(), HermitianMatrix::identity(1) * (1.0 / kPi));
    const ComplexMatrix R = op.apply(rho);
    CHECK(std::abs(R(0, 0) - 1.0) < 1e-12);
    CHECK(std::abs(R(0, 1) - qtest::bessel_j0(1.0)) < 1e-10);
    CHECK(std::abs(R(0, 1).real() - 0.7651976866) < 1e-10);
    CHECK(std::abs(R(1, 2) - qtest::bessel_j0(std::numbers::sqrt2)) < 1e-10);
    CHECK(std::abs(R(0, 2) - qtest::bessel_j0(1.0 + std::numbers::sqrt2)) < 1e-10);
  }

  TEST_CASE("adjoint examples") {
    UniformStream rng(2);
    const MomentOperator id = identity_problem(2);
    const HermitianMatrix l = qtest::random_hermitian(rng, 2);
    const MatrixDensity a = id.adjoint(l.matrix());
    CHECK(qtest::rel_err(a[0].matrix(), l.matrix()) < 1e-15);

    const MomentOperator op = array_op();
    const MatrixDensity ai = op.adjoint(ComplexMatrix::Identity(3, 3));
    for (std::size_t j = 0; j < op.node_count(); ++j) CHECK(ai[j](0, 0).real() == doctest::Approx(3.0).epsilon(1e-14));
  }

  TEST_CASE("range basis dimensions match an independent SVD of the generators") {
    CHECK(identity_problem(2).range_dim() == 4);
    const MomentOperator arr = array_op();
    CHECK(arr.range_dim() == 7);
    CHECK(generator_rank(arr) == 7);
    const MomentOperator pt = partial_trace_problem(2, 2);
    CHECK(pt.range_dim() == 4);
    CHECK(generator_rank(pt) == 4);
    for (const MomentOperator* op : {&arr, &pt}) {
      const auto& e = op->basis().elements;
      for (std::size_t i = 0; i < e.size(); ++i)
        for (std::size_t k = 0; k < e.size(); ++k)
          CHECK(std::abs(inner(e[i], e[k]) - (i == k ? 1.0 : 0.0)) <= 1e-10);
    }
    CHECK_THROWS_AS(KernelSamples(std::vector<ComplexMatrix>{}, std::vector<ComplexMatrix>{}), DimensionError);
  }

  TEST_CASE("range basis is deterministic") {
    const MomentOperator a = array_op(), b = array_op();
    for (Index i = 0; i < a.range_dim(); ++i) CHECK((a.basis().elements[i] - b.basis().elements[i]).norm() == 0.0);
  }

  TEST_CASE("project_to_range") {
    UniformStream rng(3);
    const MomentOperator op = array_op();
    const Projection p1 = op.project(op.basis().elements[0]);
    CHECK(std::abs(p1.coords(0) - 1.0) < 1e-14);
    CHECK(p1.coords.tail(op.range_dim() - 1).norm() < 1e-14);
    CHECK(p1.residual < 1e-14);
    const ComplexMatrix skew = Complex(0, 1) * ComplexMatrix::Identity(3, 3);
    const Projection p2 = op.project(skew);
    CHECK(p2.coords.norm() < 1e-13);
    CHECK(p2.residual == doctest::Approx(skew.norm()));
    const ComplexMatrix R = op.apply(random_density(rng, op.node_count(), 1));
    CHECK(op.project(R).residual <= 1e-10 * R.norm());
    CHECK_THROWS_AS(op.project(ComplexMatrix::Zero(2, 2)), DimensionError);
  }

  TEST_CASE("is_dual_feasible") {
    const MomentOperator id = identity_problem(2);
    const FeasibilityResult f = is_dual_feasible(id, id.dual_from_matrix(ComplexMatrix::Identity(2, 2)));
    CHECK(f.feasible);
    CHECK(f.min_eigenvalue == doctest::Approx(1.0));
    CHECK_FALSE(is_dual_feasible(id, id.dual_from_matrix(-ComplexMatrix::Identity(2, 2))).feasible);

    const MomentOperator op = array_op();
    RealVector e1 = RealVector::Zero(op.range_dim());
    e1(0) = 1.0;
    CHECK(is_dual_feasible(op, op.dual(e1)).feasible);
    const DualVariable third = op.dual_from_matrix(ComplexMatrix::Identity(3, 3) / 3.0);
    const FeasibilityResult ft = is_dual_feasible(op, third);
    CHECK(ft.feasible);
    CHECK(ft.min_eigenvalue == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("functional_C") {
    UniformStream rng(4);
    const MomentOperator op = array_op();
    const ComplexMatrix R = op.apply(random_density(rng, op.node_count(), 1));
    const DualVariable lam = op.dual_from_matrix(ComplexMatrix::Identity(3, 3));
    CHECK(functional_C(op, R, lam) > 0.0);
    CHECK(functional_C(op, R, op.dual(RealVector::Zero(op.range_dim()))) == 0.0);
    const ComplexMatrix& e1 = op.basis().elements[0];
    CHECK(functional_C(op, e1, op.dual_from_matrix(e1)) == doctest::Approx(1.0).epsilon(1e-14));
  }

  TEST_CASE("entropy examples") {
    const SupportGrid g = build_grid(GridKind::Interval1d, {{0.0, 1.0}}, 2, 3);
    const MatrixDensity eye = MatrixDensity::constant(g.size(), HermitianMatrix::identity(2));
    CHECK(entropy(eye, g, BurgEntropy{}) == doctest::Approx(0.0));
    CHECK(entropy(eye, g, VonNeumannEntropy{}) == doctest::Approx(0.0));
    const MatrixDensity two = MatrixDensity::constant(g.size(), HermitianMatrix::identity(1) * 2.0);
    CHECK(entropy(two, g, BurgEntropy{}) == doctest::Approx(-std::log(2.0)).epsilon(1e-14));
    CHECK(entropy(two, g, VonNeumannEntropy{}) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));
    UniformStream rng(5);
    const MatrixDensity r = random_density(rng, g.size(), 3);
    CHECK(std::abs(entropy(r, g, RelativeEntropy{r})) < 1e-13);

    MatrixDensity bad = eye;
    bad.samples[3] = HermitianMatrix::diagonal(RealVector::Constant(2, -1.0));
    try {
      entropy(bad, g, BurgEntropy{});
      FAIL("expected PositivityError");
    } catch (const PositivityError& e) {
      REQUIRE(e.node().has_value());
      CHECK(*e.node() == 3);
    }
  }
}

TEST_SUITE("moment operator properties") {
  TEST_CASE("adjoint identity and linearity on random data") {
    UniformStream rng(31);
    const MomentOperator ops[] = {array_op(), partial_trace_problem(2, 3),
                                  grid2d_problem(2, build_grid(GridKind::Rectangle2d, {{0, kPi}, {0, kPi}}, 3, 3))};
    for (const MomentOperator& op : ops) {
      for (int k = 0; k < 5; ++k) {
        const MatrixDensity rho = random_hermitian_density(rng, op.node_count(), op.m());
        RealVector c(op.range_dim());
        for (Index i = 0; i < c.size(); ++i) c(i) = rng.next(-1.0, 1.0);
        const DualVariable lam = op.dual(c);
        const double lhs = inner(lam.matrix, op.apply(rho));
        const double rhs = density_inner(op.adjoint(lam), rho, op.grid());
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
        CHECK(std::abs(lhs - c.dot(op.range_coordinates(rho))) <= 1e-10 * std::max(1.0, std::abs(lhs)));

        const MatrixDensity rho2 = random_hermitian_density(rng, op.node_count(), op.m());
        const double a = rng.next(-2, 2), b = rng.next(-2, 2);
        MatrixDensity comb;
        for (std::size_t j = 0; j < rho.size(); ++j) comb.samples.push_back(a * rho[j] + b * rho2[j]);
        const ComplexMatrix lin = a * op.apply(rho) + b * op.apply(rho2);
        CHECK((op.apply(comb) - lin).norm() <= 1e-12 * std::max(1.0, lin.norm()));

        RealVector c2(op.range_dim());
        for (Index i = 0; i < c2.size(); ++i) c2(i) = rng.next(-1.0, 1.0);
        const MatrixDensity s1 = op.adjoint(lam), s2 = op.adjoint(op.dual(c2)), s12 = op.adjoint(op.dual(a * c + b * c2));
        for (std::size_t j = 0; j < s1.size(); j += 7)
          CHECK((s12[j].matrix() - a * s1[j].matrix() - b * s2[j].matrix()).norm() <= 1e-12 * (1.0 + s12[j].norm()));
      }
    }
  }

  TEST_CASE("cone positivity: feasible duals pair nonnegatively with moments of PSD densities") {
    UniformStream rng(32);
    const MomentOperator op = array_op();
    const DualVariable start = op.dual_from_matrix(ComplexMatrix::Identity(3, 3) / 3.0);
    for (int k = 0; k < 20; ++k) {
      RealVector c = start.coords;
      for (Index i = 0; i < c.size(); ++i) c(i) += rng.next(-0.05, 0.05);
      const DualVariable lam = op.dual(c);
      if (!is_dual_feasible(op, lam).feasible) continue;
      MatrixDensity psd;
      for (std::size_t j = 0; j < op.node_count(); ++j)
        psd.samples.push_back(HermitianMatrix::identity(1) * (rng.next() < 0.5 ? 0.0 : rng.next()));
      CHECK(inner(lam.matrix, op.apply(psd)) >= -1e-12);
    }
  }

  TEST_CASE("range projections of random moments stay in the span") {
    UniformStream rng(33);
    const MomentOperator op = array_op();
    // Re-orthonormalizing the basis reproduces the same span.
    RealMatrix q(18, op.range_dim());
    for (Index i = 0; i < op.range_dim(); ++i)
      for (Index e = 0; e < 9; ++e) {
        q(2 * e, i) = op.basis().elements[i](e / 3, e % 3).real();
        q(2 * e + 1, i) = op.basis().elements[i](e / 3, e % 3).imag();
      }
    Eigen::JacobiSVD<RealMatrix> svd(q, Eigen::ComputeThinU);
    const RealMatrix u = svd.matrixU();
    // Largest principal-angle sine between the spans.
    CHECK((q - u * (u.transpose() * q)).norm() <= 1e-8);
    CHECK((u - q * (q.transpose() * u)).norm() <= 1e-8);
    for (int k = 0; k < 5; ++k) {
      const ComplexMatrix R = op.apply(random_hermitian_density(rng, op.node_count(), 1));
      CHECK(op.project(R).residual <= 1e-10 * R.norm());
    }
  }

  TEST_CASE("relative entropy of normalized positive pairs is nonnegative") {
    UniformStream rng(34);
    const SupportGrid g = build_grid(GridKind::Interval1d, {{0.0, 1.0}}, 3, 4);
    for (int k = 0; k < 20; ++k) {
      MatrixDensity a = random_density(rng, g.size(), 3), b = random_density(rng, g.size(), 3);
      double ta = 0.0, tb = 0.0;
      for (std::size_t j = 0; j < g.size(); ++j) {
        ta += g.weight(j) * a[j].trace();
        tb += g.weight(j) * b[j].trace();
      }
      for (auto& s : b.samples) s = s * (ta / tb);
      CHECK(entropy(a, g, RelativeEntropy{b}) >= -1e-10);
    }
  }
}
