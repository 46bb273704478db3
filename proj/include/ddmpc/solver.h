#pragma once

#include <string>

#include "ddmpc/cone_program.h"

namespace ddmpc {

struct SolverOptions {
  /// Relative primal/dual feasibility and duality-gap tolerance.
  double feasibility_tol{1e-8};
  int max_iterations{200};
  /// Margin used for strict matrix inequalities, in normalized units.
  double eps_strict{1e-6};
  int verbosity{0};
};

enum class SolverStatus { kOptimal, kInfeasible, kNumericalFailure };

const char* ToString(SolverStatus status);

struct SolverOutcome {
  SolverStatus status{SolverStatus::kNumericalFailure};
  /// Variable values (meaningful when optimal).
  Vector values;
  std::string detail;
  int iterations{};
  double primal_infeasibility{};
  double dual_infeasibility{};
  double relative_gap{};
};

/// Boundary to a conic solver with positive semidefinite cone support.
/// Implementations must be safe to call concurrently on distinct programs.
class ConicSolver {
 public:
  virtual ~ConicSolver() = default;
  virtual SolverOutcome Solve(const ConeProgram& program,
                              const SolverOptions& options) const = 0;
};

/// Dense primal-dual path-following method (HKM search direction with
/// Mehrotra predictor-corrector) on the LMI form of the program.
class InteriorPointSolver : public ConicSolver {
 public:
  SolverOutcome Solve(const ConeProgram& program,
                      const SolverOptions& options) const override;
};

}  // namespace ddmpc
