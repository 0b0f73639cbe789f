#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace qmoment {

/// Shapes of operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A matrix that must be Hermitian has an anti-Hermitian defect above tolerance.
class HermiticityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A matrix (or a density sample) is not positive definite.
///
/// Carries the offending eigenvalue and, for grid-sampled quantities, the
/// node index at which positivity failed.
class PositivityError : public std::runtime_error {
 public:
  PositivityError(const std::string& what, double eigenvalue,
                  std::optional<std::size_t> node = std::nullopt)
      : std::runtime_error(what), eigenvalue_(eigenvalue), node_(node) {}

  double eigenvalue() const noexcept { return eigenvalue_; }
  std::optional<std::size_t> node() const noexcept { return node_; }

 private:
  double eigenvalue_;
  std::optional<std::size_t> node_;
};

/// Eigendecomposition or factorization failed, usually due to non-finite input.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No dual-feasible starting point could be constructed for a rational-type family.
class DualStartNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problem violates a structural hypothesis of the requested solver
/// (e.g. two-dimensional support with the rational family).
class UnsupportedProblem : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace qmoment
