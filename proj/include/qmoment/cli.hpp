#pragma once

// Command-line front end: solve, feasibility and example subcommands.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qmoment/io.hpp"

namespace qmoment {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDiverged = 2;
inline constexpr int kExitInputError = 3;

/// A builtin problem with its generating density and a suggested family.
struct ExampleBundle {
  Problem problem;
  std::optional<MatrixDensity> rho_true;
  std::string family;
};

const std::vector<std::string>& example_names();
/// Throws std::invalid_argument for unknown names.
ExampleBundle make_example(const std::string& name, std::uint64_t seed = 0);

/// Parses "rational", "exponential", "weighted-rational", "weighted-exponential"
/// or "prior-exponential"; weighted kinds take sigma (identity when absent).
Family make_family(const std::string& name, const MomentOperator& op,
                   const std::optional<MatrixDensity>& sigma);

/// Runs the command line; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace qmoment
