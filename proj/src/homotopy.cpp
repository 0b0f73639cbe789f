#include "qmoment/homotopy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qmoment/detail/blocked.hpp"

namespace qmoment {

namespace {

enum class Kind { Rational, Exponential, WeightedRational, WeightedExponential, PriorExponential };

// Per-node data derived once from the family parameters.
struct Prepared {
  Kind kind = Kind::Rational;
  std::vector<ComplexMatrix> weight;     // phi or sigma^{1/2}; empty when unweighted
  std::vector<ComplexMatrix> log_sigma;  // prior kind only
};

bool rational(Kind k) { return k == Kind::Rational || k == Kind::WeightedRational; }

void require_samples(const MomentOperator& op, std::size_t count, Index dim, const char* what) {
  if (count != op.node_count() || dim != op.m()) {
    std::ostringstream os;
    os << what << ": weight density must have " << op.node_count() << " samples of dimension " << op.m();
    throw DimensionError(os.str());
  }
}

Prepared prepare(const MomentOperator& op, const Family& family) {
  Prepared p;
  switch (family.index()) {
    case 0: p.kind = Kind::Rational; break;
    case 1: p.kind = Kind::Exponential; break;
    case 2: {
      p.kind = Kind::WeightedRational;
      const auto& phi = std::get<WeightedRationalFamily>(family).phi;
      require_samples(op, phi.size(), phi.empty() ? 0 : phi.front().rows(), "weighted_rational");
      for (std::size_t j = 0; j < phi.size(); ++j) {
        if (phi[j].rows() != op.m() || phi[j].cols() != op.m())
          throw DimensionError("weighted_rational: phi must be m x m at every node");
        const RealVector sv = Eigen::JacobiSVD<ComplexMatrix>(phi[j]).singularValues();
        if (!(sv(sv.size() - 1) > 1e-12 * sv(0))) {
          std::ostringstream os;
          os << "weighted_rational: phi is singular at node " << j;
          throw PositivityError(os.str(), sv(sv.size() - 1), j);
        }
      }
      p.weight = phi;
      break;
    }
    case 3: {
      p.kind = Kind::WeightedExponential;
      const MatrixDensity& sigma = std::get<WeightedExponentialFamily>(family).sigma;
      require_samples(op, sigma.size(), sigma.dim(), "weighted_exponential");
      p.weight.resize(sigma.size());
      for (std::size_t j = 0; j < sigma.size(); ++j) {
        assert_positive_definite(sigma[j], 0.0);
        p.weight[j] = matrix_sqrt(sigma[j]).matrix();
      }
      break;
    }
    case 4: {
      p.kind = Kind::PriorExponential;
      const MatrixDensity& sigma = std::get<PriorExponentialFamily>(family).sigma;
      require_samples(op, sigma.size(), sigma.dim(), "prior_exponential");
      p.log_sigma.resize(sigma.size());
      for (std::size_t j = 0; j < sigma.size(); ++j) p.log_sigma[j] = matrix_log(sigma[j]).matrix();
      break;
    }
  }
  return p;
}

struct Evaluation {
  RealVector h;          // range coordinates of L(rho)
  RealMatrix J;          // empty unless requested
  double min_eig = 0.0;  // of L* lambda over the grid
  double mean_eig = 0.0;
  MatrixDensity density; // empty unless requested
};

struct Partial {
  RealVector h;
  RealMatrix J;
  double min_eig = std::numeric_limits<double>::infinity();
  double eig_sum = 0.0;
};

// Scalar densities: every matrix above is 1 x 1 and the Jacobian update is a
// rank-one outer product of the real adjoint images.
void scalar_block(const MomentOperator& op, const Prepared& p, const RealVector& coords, std::size_t begin,
                  std::size_t end, bool want_jacobian, MatrixDensity* density, Partial& acc) {
  const double inv_e = std::exp(-1.0);
  const bool rat = rational(p.kind);
  RealVector a(op.range_dim());
  for (std::size_t j = begin; j < end; ++j) {
    const double w = op.grid().weight(j);
    a = op.adjoint_stack(j).row(0).real().transpose();
    const double sj = a.dot(coords);
    acc.min_eig = std::min(acc.min_eig, sj);
    acc.eig_sum += sj;
    double fb, fprime, scale = inv_e;
    if (rat) {
      if (!(sj > 0.0)) {
        std::ostringstream os;
        os << "L*(lambda) is not positive definite at node " << j;
        throw PositivityError(os.str(), sj, j);
      }
      fb = 1.0 / sj;
      fprime = fb * fb;
      scale = 1.0;
    } else {
      const double b = p.kind == Kind::PriorExponential ? p.log_sigma[j](0, 0).real() - sj : -sj;
      fb = std::exp(b);
      fprime = fb;
    }
    const double gain = p.weight.empty() ? 1.0 : std::norm(p.weight[j](0, 0));
    const double rho = scale * fb * gain;
    if (!std::isfinite(rho)) throw NumericalError("family density is not finite");
    acc.h.noalias() += (w * rho) * a;
    if (density) density->samples[j] = HermitianMatrix::trusted(ComplexMatrix::Constant(1, 1, rho));
    if (want_jacobian) acc.J.noalias() -= (scale * w * fprime * gain) * a * a.transpose();
  }
}

Evaluation evaluate(const MomentOperator& op, const Prepared& p, const RealVector& coords,
                    bool want_jacobian, bool want_density, double pos_floor) {
  const Index m = op.m();
  const Index d = op.range_dim();
  const std::size_t n = op.node_count();
  const double inv_e = std::exp(-1.0);
  Evaluation ev;
  if (want_density) ev.density.samples.resize(n);

  Partial init;
  init.h = RealVector::Zero(d);
  if (want_jacobian) init.J = RealMatrix::Zero(d, d);

  Partial total = detail::blocked_reduce(
      n, init,
      [&](std::size_t begin, std::size_t end, Partial& acc) {
        const Index mm = m * m;
        ComplexMatrix kron(mm, mm), at(mm, d), wt(mm, d);
        RealVector f(mm);
        if (m == 1) {
          scalar_block(op, p, coords, begin, end, want_jacobian, want_density ? &ev.density : nullptr, acc);
          return;
        }
        for (std::size_t j = begin; j < end; ++j) {
          const double w = op.grid().weight(j);
          const ComplexMatrix& stack = op.adjoint_stack(j);
          const EigDecomposition es = eig(HermitianMatrix::trusted(op.adjoint_at(j, coords)));
          acc.min_eig = std::min(acc.min_eig, es.eigenvalues(0));
          acc.eig_sum += es.eigenvalues.sum();

          // core = U f(b) U*, with F the divided differences of f on b.
          RealVector b;
          const ComplexMatrix* u = &es.eigenvectors;
          EigDecomposition eb;
          double scale = 1.0;
          if (rational(p.kind)) {
            if (!(es.eigenvalues(0) > 0.0)) {
              std::ostringstream os;
              os << "L*(lambda) is not positive definite at node " << j;
              throw PositivityError(os.str(), es.eigenvalues(0), j);
            }
            b = es.eigenvalues;
          } else if (p.kind == Kind::PriorExponential) {
            eb = eig(HermitianMatrix::trusted(p.log_sigma[j] - op.adjoint_at(j, coords)));
            b = eb.eigenvalues;
            u = &eb.eigenvectors;
            scale = inv_e;
          } else {
            b = -es.eigenvalues;
            scale = inv_e;
          }
          RealVector fb(m);
          for (Index k = 0; k < m; ++k) fb(k) = rational(p.kind) ? 1.0 / b(k) : std::exp(b(k));
          ComplexMatrix rho = scale * (*u) * fb.asDiagonal() * u->adjoint();
          const bool weighted = !p.weight.empty();
          if (weighted) rho = p.weight[j] * rho * p.weight[j].adjoint();
          rho = 0.5 * (rho + rho.adjoint());
          if (!rho.allFinite()) throw NumericalError("family density is not finite");

          // <A_k, rho> = Re vec(A_k)* vec(rho).
          acc.h.noalias() += w * (stack.adjoint() * rho.reshaped()).real();
          if (want_density) ev.density.samples[j] = HermitianMatrix::trusted(rho);

          if (want_jacobian) {
            for (Index l = 0; l < m; ++l)
              for (Index k = 0; k < m; ++k)
                f(k + m * l) = rational(p.kind) ? 1.0 / (b(k) * b(l)) : exp_divided_difference(b(k), b(l));
            // vec(V* A V) = kron(V^T, V*) vec(A).
            auto congruence = [&](const ComplexMatrix& v, ComplexMatrix& out) {
              for (Index bb = 0; bb < m; ++bb)
                for (Index a = 0; a < m; ++a)
                  for (Index l = 0; l < m; ++l)
                    for (Index k = 0; k < m; ++k) kron(k + m * l, a + m * bb) = std::conj(v(a, k)) * v(bb, l);
              out.noalias() = kron * stack;
            };
            congruence(*u, at);
            if (weighted)
              congruence(ComplexMatrix(p.weight[j] * (*u)), wt);
            else
              wt = at;
            // J_i,jj += c sum_kl F_kl Re(Wt_i[kl] conj(At_jj[kl])).
            acc.J.noalias() += (-scale * w) * (at.adjoint() * (f.cast<Complex>().asDiagonal() * wt)).real().transpose();
          }
        }
      },
      [](Partial& acc, const Partial& part) {
        acc.h += part.h;
        if (acc.J.size() > 0) acc.J += part.J;
        acc.min_eig = std::min(acc.min_eig, part.min_eig);
        acc.eig_sum += part.eig_sum;
      });

  ev.h = std::move(total.h);
  ev.J = std::move(total.J);
  ev.min_eig = total.min_eig;
  ev.mean_eig = total.eig_sum / static_cast<double>(n * static_cast<std::size_t>(m));
  if (rational(p.kind) && !(ev.min_eig > pos_floor * std::abs(ev.mean_eig))) {
    std::ostringstream os;
    os << "L*(lambda) min eigenvalue " << ev.min_eig << " below positivity floor";
    throw PositivityError(os.str(), ev.min_eig);
  }
  return ev;
}

Definiteness tag_for(const Prepared& p, Index m) {
  const bool weighted = p.kind == Kind::WeightedRational || p.kind == Kind::WeightedExponential;
  return weighted && m > 1 ? Definiteness::General : Definiteness::Negative;
}

// x with J x = rhs. A failed factorization means the Jacobian has lost
// definiteness or rank, i.e. lambda is at the boundary.
RealVector solve_jacobian(const RealMatrix& J, Definiteness tag, const RealVector& rhs) {
  RealVector x;
  if (tag == Definiteness::Negative) {
    Eigen::LLT<RealMatrix> llt(-J);
    if (llt.info() != Eigen::Success) throw NumericalError("Cholesky of -J failed");
    x = -llt.solve(rhs);
  } else {
    Eigen::PartialPivLU<RealMatrix> lu(J);
    if (!(lu.rcond() > 1e-14)) throw NumericalError("Jacobian is numerically singular");
    x = lu.solve(rhs);
  }
  if (!x.allFinite()) throw NumericalError("non-finite Newton direction");
  return x;
}

void check_dimension(const MomentOperator& op, const Prepared& p, const SolveConfig& cfg) {
  if (rational(p.kind) && op.grid().dimension() == 2 && !cfg.torus_override)
    throw UnsupportedProblem(
        "rational families need a one-dimensional support set; set torus_override for "
        "doubly periodic kernels on a rectangle");
}

DualVariable checked_start(const MomentOperator& op, const Prepared& p, const Family& family,
                           const std::optional<DualVariable>& start) {
  if (!start) return default_dual_start(op, family);
  if (start->coords.size() != op.range_dim())
    throw DimensionError("start: coordinate count does not match range dimension");
  DualVariable s = op.dual(start->coords);
  if (rational(p.kind) && !is_dual_feasible(op, s).feasible)
    throw DualStartNotFound("supplied start is not dual feasible");
  return s;
}

struct Target {
  RealVector r;
  double norm = 0.0;
  double tol = 0.0;  // convergence threshold on V
};

double safe_slope(const std::vector<TracePoint>& trace) {
  try {
    return lyapunov_slope(trace);
  } catch (const std::invalid_argument&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

// Newton steps lambda += J^{-1}(r - h) while V improves.
void newton_polish(const MomentOperator& op, const Prepared& p, const SolveConfig& cfg,
                   const Target& tg, RealVector& x, Evaluation& ev, double& V, SolveReport& rep) {
  const Definiteness tag = tag_for(p, op.m());
  for (int it = 0; it < 5 && V > 1e-14 * tg.norm * tg.norm; ++it) {
    try {
      const RealVector xn = x + solve_jacobian(ev.J, tag, tg.r - ev.h);
      Evaluation en = evaluate(op, p, xn, true, false, cfg.pos_floor);
      const double vn = (tg.r - en.h).squaredNorm();
      if (!(vn < V)) break;
      x = xn;
      ev = std::move(en);
      V = vn;
      ++rep.newton_iterations;
    } catch (const PositivityError&) {
      break;
    } catch (const NumericalError&) {
      break;
    }
  }
}

void finalize(const MomentOperator& op, const Prepared& p, const Family& family, const Target& tg,
              const RealVector& x, double V, SolveReport& rep) {
  rep.lambda_hat = op.dual(x);
  rep.V_final = V;
  if (rep.status != SolveStatus::Converged) return;
  try {
    Evaluation ev = evaluate(op, p, x, false, true, 0.0);
    rep.density = std::move(ev.density);
  } catch (const PositivityError& e) {
    rep.status = SolveStatus::DivergedBoundary;
    rep.message = std::string("converged lambda has no positive density: ") + e.what();
    return;
  }
  if (!rep.density.is_positive()) {
    rep.status = SolveStatus::DivergedBoundary;
    rep.message = "converged density is not positive definite";
    return;
  }
  const ComplexMatrix lrho = op.apply(rep.density);
  rep.duality_pairing = inner(rep.lambda_hat.matrix, lrho);
  const SupportGrid& g = op.grid();
  rep.burg_entropy = entropy(rep.density, g, BurgEntropy{});
  rep.vonneumann_entropy = entropy(rep.density, g, VonNeumannEntropy{});
  switch (p.kind) {
    case Kind::Rational:
    case Kind::WeightedRational: rep.entropy_value = rep.burg_entropy; break;
    case Kind::Exponential:
    case Kind::WeightedExponential: rep.entropy_value = rep.vonneumann_entropy; break;
    case Kind::PriorExponential:
      rep.entropy_value = entropy(rep.density, g, RelativeEntropy{std::get<PriorExponentialFamily>(family).sigma});
      break;
  }
  (void)tg;
}

TracePoint trace_point(double t, double V, const Evaluation& ev, const RealVector& x) {
  return {t, V, ev.min_eig, x.norm()};
}

}  // namespace

// ------------------------------------------------------------------ families

WeightedRationalFamily WeightedRationalFamily::from_sigma(const MatrixDensity& sigma) {
  WeightedRationalFamily f;
  f.phi.reserve(sigma.size());
  for (const HermitianMatrix& s : sigma.samples) f.phi.push_back(matrix_sqrt(s).matrix());
  return f;
}

std::string family_name(const Family& family) {
  static const char* names[] = {"rational", "exponential", "weighted-rational", "weighted-exponential",
                                "prior-exponential"};
  return names[family.index()];
}

bool is_rational_kind(const Family& family) {
  return std::holds_alternative<RationalFamily>(family) || std::holds_alternative<WeightedRationalFamily>(family);
}

std::string status_name(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return "Converged";
    case SolveStatus::DivergedUnbounded: return "DivergedUnbounded";
    case SolveStatus::DivergedBoundary: return "DivergedBoundary";
    case SolveStatus::NotInRange: return "NotInRange";
    case SolveStatus::MaxTimeExceeded: return "MaxTimeExceeded";
  }
  return "Unknown";
}

void SolveConfig::validate() const {
  const double values[] = {tol, t_max, h0, h_min, pos_floor, lambda_max, range_residual_tol};
  for (double v : values)
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("solve config: parameters must be positive");
  if (!(tol < 1.0)) throw std::invalid_argument("solve config: tol must be below 1");
  if (h_min > h0) throw std::invalid_argument("solve config: h_min exceeds h0");
}

MatrixDensity family_density(const MomentOperator& op, const DualVariable& lambda, const Family& family,
                             double pos_floor) {
  const Prepared p = prepare(op, family);
  if (lambda.coords.size() != op.range_dim()) throw DimensionError("family_density: lambda has the wrong size");
  return evaluate(op, p, lambda.coords, false, true, pos_floor).density;
}

ComplexMatrix h_map(const MomentOperator& op, const DualVariable& lambda, const Family& family) {
  return op.apply(family_density(op, lambda, family));
}

JacobianResult jacobian(const MomentOperator& op, const DualVariable& lambda, const Family& family) {
  const Prepared p = prepare(op, family);
  if (lambda.coords.size() != op.range_dim()) throw DimensionError("jacobian: lambda has the wrong size");
  return {evaluate(op, p, lambda.coords, true, false, 0.0).J, tag_for(p, op.m())};
}

DualVariable default_dual_start(const MomentOperator& op, const Family& family) {
  const Index d = op.range_dim();
  if (!is_rational_kind(family)) return op.dual(RealVector::Zero(d));
  // Normal equations of min sum_j w_j ||L*(lambda)(t_j) - I||^2.
  struct Normal {
    RealMatrix gram;
    RealVector rhs;
  };
  Normal init{RealMatrix::Zero(d, d), RealVector::Zero(d)};
  const Normal ne = detail::blocked_reduce(
      op.node_count(), init,
      [&](std::size_t begin, std::size_t end, Normal& acc) {
        for (std::size_t j = begin; j < end; ++j) {
          const double w = op.grid().weight(j);
          for (Index i = 0; i < d; ++i) {
            const ComplexMatrix& ai = op.adjoint_basis(j, i);
            acc.rhs(i) += w * ai.trace().real();
            for (Index k = 0; k <= i; ++k) acc.gram(i, k) += w * inner(ai, op.adjoint_basis(j, k));
          }
        }
      },
      [](Normal& acc, const Normal& part) {
        acc.gram += part.gram;
        acc.rhs += part.rhs;
      });
  RealMatrix gram = ne.gram.selfadjointView<Eigen::Lower>();
  Eigen::LDLT<RealMatrix> ldlt(gram);
  RealVector c = ldlt.solve(ne.rhs);
  if (ldlt.info() != Eigen::Success || !c.allFinite())
    throw DualStartNotFound("least-squares dual start: normal equations are singular");
  DualVariable lambda = op.dual(c);
  const FeasibilityResult fr = is_dual_feasible(op, lambda);
  if (!fr.feasible) {
    std::ostringstream os;
    os << "least-squares dual start is not dual feasible (min eigenvalue " << fr.min_eigenvalue
       << " at node " << fr.argmin_node << "); supply a start";
    throw DualStartNotFound(os.str());
  }
  return lambda;
}

// ------------------------------------------------------------------- solvers

namespace {

struct Setup {
  Prepared prep;
  Target target;
  DualVariable start;
  bool in_range = true;
};

Setup setup(const MomentOperator& op, const ComplexMatrix& R, const Family& family, const SolveConfig& cfg,
            const std::optional<DualVariable>& start, SolveReport& rep) {
  cfg.validate();
  Setup s;
  s.prep = prepare(op, family);
  check_dimension(op, s.prep, cfg);
  const Projection pr = op.project(R);
  s.target.r = pr.coords;
  s.target.norm = R.norm();
  s.target.tol = cfg.tol * std::min(1.0, s.target.norm * s.target.norm);
  rep.range_residual = pr.residual;
  if (pr.residual > cfg.range_residual_tol * s.target.norm) {
    s.in_range = false;
    rep.status = SolveStatus::NotInRange;
    std::ostringstream os;
    os << "moment lies off the range space: residual " << pr.residual << " > "
       << cfg.range_residual_tol << " * ||R||";
    rep.message = os.str();
    return s;
  }
  s.start = checked_start(op, s.prep, family, start);
  return s;
}

}  // namespace

SolveReport solve(const MomentOperator& op, const ComplexMatrix& R, const Family& family,
                  const SolveConfig& cfg, const std::optional<DualVariable>& start) {
  SolveReport rep;
  Setup s = setup(op, R, family, cfg, start, rep);
  if (!s.in_range) return rep;
  const Prepared& p = s.prep;
  const Target& tg = s.target;
  const Definiteness tag = tag_for(p, op.m());

  RealVector x = s.start.coords;
  Evaluation ev;
  try {
    ev = evaluate(op, p, x, true, false, cfg.pos_floor);
  } catch (const std::runtime_error& e) {
    rep.status = SolveStatus::DivergedBoundary;
    rep.message = std::string("start rejected: ") + e.what();
    rep.lambda_hat = op.dual(x);
    return rep;
  }
  double V = (tg.r - ev.h).squaredNorm();
  double t = 0.0, h = cfg.h0;
  rep.trace.push_back(trace_point(t, V, ev, x));

  auto field = [&](const RealVector& at, const Evaluation* known) {
    if (known) return solve_jacobian(known->J, tag, tg.r - known->h);
    const Evaluation e = evaluate(op, p, at, true, false, cfg.pos_floor);
    return solve_jacobian(e.J, tag, tg.r - e.h);
  };

  bool done = false;
  while (!done) {
    if (V <= tg.tol) {
      rep.status = SolveStatus::Converged;
      break;
    }
    if (t >= cfg.t_max) {
      rep.status = SolveStatus::MaxTimeExceeded;
      rep.message = "t_max reached before V fell below tol";
      break;
    }
    bool accepted = false;
    RealVector xn;
    Evaluation en;
    double vn = V;
    try {
      const RealVector k1 = field(x, &ev);
      const RealVector k2 = field(x + 0.5 * h * k1, nullptr);
      const RealVector k3 = field(x + 0.5 * h * k2, nullptr);
      const RealVector k4 = field(x + h * k3, nullptr);
      xn = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!xn.allFinite()) throw NumericalError("non-finite step");
      if (xn.norm() > cfg.lambda_max) {
        rep.status = SolveStatus::DivergedUnbounded;
        rep.message = "||lambda|| exceeded lambda_max";
        x = xn;
        break;
      }
      en = evaluate(op, p, xn, true, false, cfg.pos_floor);
      vn = (tg.r - en.h).squaredNorm();
      // The exact flow has V(t + h) = V(t) e^{-2h}; demand at least half that rate.
      accepted = vn <= V * std::exp(-h);
    } catch (const PositivityError&) {
    } catch (const NumericalError&) {
    }
    if (!accepted) {
      ++rep.rejected_steps;
      h *= 0.5;
      if (h < cfg.h_min) {
        rep.status = SolveStatus::DivergedBoundary;
        rep.message = "step size collapsed below h_min";
        done = true;
      }
      continue;
    }
    x = std::move(xn);
    ev = std::move(en);
    V = vn;
    t += h;
    ++rep.iterations;
    rep.trace.push_back(trace_point(t, V, ev, x));
    h = std::min(2.0 * h, cfg.h0);
  }

  if (rep.status == SolveStatus::Converged) {
    rep.fitted_V_slope = safe_slope(rep.trace);
    if (cfg.newton_polish) newton_polish(op, p, cfg, tg, x, ev, V, rep);
  }
  finalize(op, p, family, tg, x, V, rep);
  return rep;
}

SolveReport solve_tau(const MomentOperator& op, const ComplexMatrix& R, const Family& family,
                      const SolveConfig& cfg, const std::optional<DualVariable>& start) {
  SolveReport rep;
  Setup s = setup(op, R, family, cfg, start, rep);
  if (!s.in_range) return rep;
  const Prepared& p = s.prep;
  const Target& tg = s.target;
  const Definiteness tag = tag_for(p, op.m());

  RealVector x = s.start.coords;
  Evaluation ev;
  try {
    ev = evaluate(op, p, x, true, false, cfg.pos_floor);
  } catch (const std::runtime_error& e) {
    rep.status = SolveStatus::DivergedBoundary;
    rep.message = std::string("start rejected: ") + e.what();
    rep.lambda_hat = op.dual(x);
    return rep;
  }
  const RealVector r0 = ev.h;
  const RealVector dr = tg.r - r0;
  const double ctol = 1e-10 * std::max({1.0, tg.r.norm(), r0.norm()});
  double V = dr.squaredNorm();
  double tau = 0.0, h = cfg.h0;
  rep.trace.push_back(trace_point(tau, V, ev, x));

  constexpr int kMaxSteps = 100000;
  auto field = [&](const RealVector& at, const Evaluation* known) {
    if (known) return solve_jacobian(known->J, tag, dr);
    const Evaluation e = evaluate(op, p, at, true, false, cfg.pos_floor);
    return solve_jacobian(e.J, tag, dr);
  };

  while (tau < 1.0) {
    if (rep.iterations >= kMaxSteps) {
      rep.status = SolveStatus::MaxTimeExceeded;
      rep.message = "step budget exhausted before tau = 1";
      break;
    }
    const double step = std::min(h, 1.0 - tau);
    const double tau_next = step >= 1.0 - tau ? 1.0 : tau + step;
    bool accepted = false;
    RealVector xn;
    Evaluation en;
    try {
      const RealVector k1 = field(x, &ev);
      const RealVector k2 = field(x + 0.5 * step * k1, nullptr);
      const RealVector k3 = field(x + 0.5 * step * k2, nullptr);
      const RealVector k4 = field(x + step * k3, nullptr);
      xn = x + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!xn.allFinite()) throw NumericalError("non-finite predictor");
      if (xn.norm() > cfg.lambda_max) {
        rep.status = SolveStatus::DivergedUnbounded;
        rep.message = "||lambda|| exceeded lambda_max";
        x = xn;
        break;
      }
      const RealVector goal = r0 + tau_next * dr;
      en = evaluate(op, p, xn, true, false, cfg.pos_floor);
      double res = (goal - en.h).norm();
      for (int it = 0; it < 8 && res > ctol; ++it) {
        const RealVector xc = xn + solve_jacobian(en.J, tag, goal - en.h);
        Evaluation ec = evaluate(op, p, xc, true, false, cfg.pos_floor);
        const double rc = (goal - ec.h).norm();
        if (!(rc < res)) break;
        xn = xc;
        en = std::move(ec);
        res = rc;
      }
      accepted = res <= ctol;
    } catch (const PositivityError&) {
    } catch (const NumericalError&) {
    }
    if (!accepted) {
      ++rep.rejected_steps;
      h *= 0.5;
      if (h < cfg.h_min) {
        rep.status = SolveStatus::DivergedBoundary;
        rep.message = "tau step collapsed below h_min";
        break;
      }
      continue;
    }
    x = std::move(xn);
    ev = std::move(en);
    tau = tau_next;
    V = (tg.r - ev.h).squaredNorm();
    ++rep.iterations;
    rep.trace.push_back(trace_point(tau, V, ev, x));
    h = std::min(2.0 * h, cfg.h0);
  }

  if (tau >= 1.0) {
    if (cfg.newton_polish) newton_polish(op, p, cfg, tg, x, ev, V, rep);
    if (V <= tg.tol) {
      rep.status = SolveStatus::Converged;
    } else {
      rep.status = SolveStatus::DivergedBoundary;
      rep.message = "tau = 1 reached without matching the moments";
    }
  }
  finalize(op, p, family, tg, x, V, rep);
  return rep;
}

double lyapunov_slope(const std::vector<TracePoint>& trace) {
  if (trace.empty() || !(trace.back().V <= 1e-8))
    throw std::invalid_argument("lyapunov_slope: trace has no converged tail");
  // Strictly decreasing suffix.
  std::size_t first = trace.size() - 1;
  while (first > 0 && trace[first - 1].V > trace[first].V) --first;
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = first; i < trace.size(); ++i)
    if (trace[i].V > 1e-13) pts.emplace_back(trace[i].t, std::log(trace[i].V));
  if (pts.size() < 10) throw std::invalid_argument("lyapunov_slope: fewer than 10 usable trace points");
  double mt = 0.0, ml = 0.0;
  for (const auto& [t, l] : pts) {
    mt += t;
    ml += l;
  }
  mt /= static_cast<double>(pts.size());
  ml /= static_cast<double>(pts.size());
  double num = 0.0, den = 0.0;
  for (const auto& [t, l] : pts) {
    num += (t - mt) * (l - ml);
    den += (t - mt) * (t - mt);
  }
  if (!(den > 0.0)) throw std::invalid_argument("lyapunov_slope: degenerate time samples");
  return num / den;
}

}  // namespace qmoment
