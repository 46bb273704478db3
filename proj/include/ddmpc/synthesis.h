#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ddmpc/cone_program.h"
#include "ddmpc/matrixcore.h"
#include "ddmpc/solver.h"
#include "ddmpc/uncertainty.h"

namespace ddmpc {

/// Stage cost l(u, x) = |u|_R^2 + |x|_Q^2 and constraint |C_x x + C_u u| <= 1.
struct Weights {
  SymMatrix q;
  SymMatrix r;
  Matrix c_x;
  Matrix c_u;

  int state_dim() const { return q.dim(); }
  int input_dim() const { return r.dim(); }
  /// Throws ParameterError on non-PD weights or inconsistent shapes.
  void Validate() const;
  double StageCost(const Vector& u, const Vector& x) const;
  double ConstraintValue(const Vector& x, const Vector& u) const;

  bool operator==(const Weights& o) const {
    return q == o.q && r == o.r && SameMatrix(c_x, o.c_x) &&
           SameMatrix(c_u, o.c_u);
  }
};

/// Terminal cost matrix with its cached inverse.
struct TerminalCost {
  explicit TerminalCost(const SymMatrix& p);
  SymMatrix p;
  SymMatrix p_inv;
};

enum class ProblemKind {
  kInitial,
  kAdaptive,
  kInitialNoisy,
  kAdaptiveNoisy,
  kBootstrap,
};

const char* ToString(ProblemKind kind);

/// Everything needed to assemble one synthesis SDP.
struct ProblemSpec {
  ProblemKind kind{ProblemKind::kInitial};
  Vector x;
  const Qmi* prior{nullptr};
  const Weights* weights{nullptr};
  const TerminalCost* terminal{nullptr};
  std::vector<DataTerm> data;
  const NoiseBound* noise{nullptr};
  NoiseCoupling coupling{NoiseCoupling::kSubstituted};
  double c{0.0};
  double eps_strict{1e-6};
};

/// An assembled SDP plus handles to its decision variables. The program is
/// expressed in normalized units: the state is divided by `scale` and all
/// decision variables are natural values divided by scale^2.
struct BuiltProgram {
  ProblemKind kind{};
  ConeProgram program;
  double scale{1.0};
  int n{};
  int m{};
  VariableBlock gamma;
  VariableBlock h;
  VariableBlock l;
  VariableBlock tau_p;
  std::vector<VariableBlock> tau;
  std::vector<VariableBlock> o;
  std::vector<VariableBlock> lambda1;
  std::vector<VariableBlock> lambda2;
  std::vector<int> lags;
};

BuiltProgram BuildProgram(const ProblemSpec& spec);

struct SynthesisResult {
  SolverStatus status{SolverStatus::kNumericalFailure};
  ProblemKind kind{};
  std::string detail;
  double gamma{};
  SymMatrix h;
  Matrix l;
  Matrix f;
  SymMatrix p;
  /// tau_p (1x1); tau, lambda1, lambda2 (k x 1); O_<j> per data term.
  std::map<std::string, Matrix> multipliers;
  double solve_time_ms{};
  int iterations{};
  /// Residuals at the returned solution, in normalized units.
  std::vector<BlockResidual> residuals;
  std::shared_ptr<const BuiltProgram> program;
  /// Solution vector in normalized units.
  Vector values;

  bool optimal() const { return status == SolverStatus::kOptimal; }
  double MinResidual() const;
  double MinStrictSlack() const;
};

/// Solver and numerical settings shared by all synthesis calls.
struct SynthesisContext {
  const ConicSolver* solver{nullptr};
  SolverOptions options;
  /// Data points with |[x; u]| at or below this are skipped.
  double zero_threshold{1e-8};
  NoiseCoupling coupling{NoiseCoupling::kSubstituted};

  const ConicSolver& GetSolver() const;
};

SynthesisResult SolveInitial(const Vector& x0, const Qmi& prior,
                             const Weights& weights,
                             const SynthesisContext& ctx = {});

SynthesisResult SolveAdaptive(const Vector& x_t, const Qmi& prior,
                              const DataWindow& window,
                              const VariationProfile& profile,
                              const TerminalCost& terminal,
                              const Weights& weights,
                              const SynthesisContext& ctx = {});

SynthesisResult SolveInitialNoisy(const Vector& x0, const Qmi& prior,
                                  const Weights& weights, double c,
                                  const SynthesisContext& ctx = {});

SynthesisResult SolveAdaptiveNoisy(const Vector& x_t, const Qmi& prior,
                                   const DataWindow& window,
                                   const VariationProfile& profile,
                                   const NoiseBound& noise,
                                   const TerminalCost& terminal,
                                   const Weights& weights, double c,
                                   const SynthesisContext& ctx = {});

SynthesisResult SolveBootstrap(const Vector& x_t, const Qmi& prior,
                               const DataWindow& window,
                               const VariationProfile& profile,
                               const Weights& weights,
                               const SynthesisContext& ctx = {});

/// Solves an already assembled program and extracts gains.
SynthesisResult SolveBuilt(std::shared_ptr<const BuiltProgram> built,
                           const SynthesisContext& ctx);

/// Result of the heuristic search for the noise constant c.
struct NoiseConstantChoice {
  double c{};
  int doublings{};
  SynthesisResult initial;
};

/// Starts from c = 2 lambda_max(P) of the noise-free initial solution and
/// doubles c until the noisy initial problem is feasible.
NoiseConstantChoice ChooseNoiseConstant(const Vector& x0, const Qmi& prior,
                                        const Weights& weights,
                                        const SynthesisContext& ctx = {},
                                        int max_doublings = 8);

/// Smallest eigenvalue over all blocks of `built` when the given backup
/// solution is substituted with zero data multipliers. Margins are ignored.
double CandidateResidual(const BuiltProgram& built,
                         const SynthesisResult& backup);

struct CertificateReport {
  std::vector<BlockResidual> lmi_residuals;
  double min_residual{};
  bool residuals_ok{};
  double bound_value{};
  bool bound_ok{};
  double gain_error{};
  bool gain_consistent{};
  bool decay_checked{};
  int decay_models{};
  double decay_max_violation{};
  bool decay_ok{true};

  bool passed() const {
    return residuals_ok && bound_ok && gain_consistent && decay_ok;
  }
};

using ModelSample = std::pair<Matrix, Matrix>;

/// Re-substitutes a solution into its constraints and checks the cost bound,
/// the gain identity F H = L, and (given a terminal cost) the one-step decay
/// l(Fx, x) + |(A + B F) x|^2_{P_terminal} <= gamma for each model sample.
CertificateReport CheckCertificates(
    const SynthesisResult& result, const Vector& x_t, const Weights& weights,
    const std::optional<SymMatrix>& p_terminal = std::nullopt,
    const std::vector<ModelSample>& models = {});

}  // namespace ddmpc
