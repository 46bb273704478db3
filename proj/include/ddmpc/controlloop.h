#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ddmpc/plant.h"
#include "ddmpc/synthesis.h"
#include "ddmpc/uncertainty.h"

namespace ddmpc {

enum class LoopMode {
  kAdaptive,
  kStatic,
  kBootstrap,
  kAdaptiveNoisy,
  kStaticNoisy,
};

const char* ToString(LoopMode mode);
LoopMode ParseLoopMode(const std::string& s);
bool IsNoisyMode(LoopMode mode);

enum class ControllerSource {
  kInitial,
  kAdaptive,
  kBackupFallback,
  kExcitation,
  kStoppedStatic,
};

const char* ToString(ControllerSource source);

struct LoopConfig {
  int steps{40};
  /// Window truncation length; unset uses the profile default, 0 means
  /// unbounded.
  std::optional<int> window_length;
  LoopMode mode{LoopMode::kAdaptive};
  int excitation_steps{10};
  double input_min{-1.0};
  double input_max{1.0};
  /// Switch permanently to the backup gain once |x_t| <= threshold.
  std::optional<double> stop_threshold;
  std::uint64_t seed{0};
  /// Noise constant for the noisy modes; chosen automatically when unset.
  std::optional<double> c;
  /// Replace the noise samples by zeros (noisy modes only).
  bool zero_noise{false};

  void Validate() const;
  bool operator==(const LoopConfig& o) const;
};

/// The controller-side problem data.
struct ProblemSetup {
  Qmi prior;
  VariationProfile profile;
  std::optional<NoiseBound> noise;
  Weights weights;
  Vector x0;
};

struct StepRecord {
  int t{};
  Vector x;
  /// Empty on the final (state-only) record.
  Vector u;
  std::optional<double> gamma;
  std::optional<ControllerSource> source;
  /// |x|^2 under the backup cost matrix; NaN when no such matrix exists.
  double lyapunov_value{};
  double solve_time_ms{};
  std::optional<double> lmi_residual_min;
  double constraint_value{};
  /// |x_t|^2 under the cost matrix of the synthesized controller.
  std::optional<double> bound_value;
  /// Backup solution substituted into this step's constraints.
  std::optional<double> candidate_residual;
  std::optional<SolverStatus> solver_status;

  bool has_input() const { return u.size() > 0; }
};

struct RunSummary {
  LoopMode mode{};
  std::uint64_t seed{};
  /// steps + 1 records; the last holds the final state only.
  std::vector<StepRecord> records;
  double closed_loop_cost{};
  double max_constraint_value{};
  int fallback_count{};
  int infeasible_count{};
  int numerical_fallback_count{};
  std::optional<int> rpi_entry_time;
  double final_state_norm{};

  bool initial_feasible{};
  std::string initial_detail;
  std::optional<int> first_synthesis_step;
  int synthesized_steps{};

  double gamma_p{};
  std::optional<SymMatrix> p_star;
  Matrix f_p;
  std::optional<double> c;
  std::optional<double> c_rpi;
  std::optional<double> beta;
  std::optional<SynthesisResult> initial;
};

/// Raised when the prior-only SDP is infeasible (or fails) at t = 0 in a
/// mode that requires it.
class InitialInfeasibleError : public std::runtime_error {
 public:
  InitialInfeasibleError(const std::string& what, SolverStatus status)
      : std::runtime_error(what), status_(status) {}
  SolverStatus status() const { return status_; }

 private:
  SolverStatus status_;
};

/// Adaptive receding-horizon loop without noise.
RunSummary RunAlgorithm1(PlantModel& plant, const ProblemSetup& setup,
                         const LoopConfig& cfg,
                         const SynthesisContext& ctx = {});

/// Adaptive receding-horizon loop with bounded process noise.
RunSummary RunAlgorithm2(PlantModel& plant, const ProblemSetup& setup,
                         const LoopConfig& cfg,
                         const SynthesisContext& ctx = {});

/// Applies the prior-only gain at every step.
RunSummary RunStatic(PlantModel& plant, const ProblemSetup& setup,
                     const LoopConfig& cfg, bool noisy,
                     const SynthesisContext& ctx = {});

/// Random excitation followed by data-plus-prior synthesis.
RunSummary RunBootstrap(PlantModel& plant, const ProblemSetup& setup,
                        const LoopConfig& cfg,
                        const SynthesisContext& ctx = {});

/// Dispatches on cfg.mode.
RunSummary RunMode(PlantModel& plant, const ProblemSetup& setup,
                   const LoopConfig& cfg, const SynthesisContext& ctx = {});

/// Closed-loop cost recomputed from the records.
double RecomputeCost(const std::vector<StepRecord>& records,
                     const Weights& weights);

struct MonitorViolation {
  int t{};
  double excess{};
};

/// Steps t where |x_{t+1}|^2_P - |x_t|^2_P > -l(u_t, x_t) + 1e-6 (1 + V_t).
std::vector<MonitorViolation> MonitorLyapunov(
    const std::vector<StepRecord>& records, const SymMatrix& p_star,
    const Weights& weights);

/// Steps violating invariance of {V <= c_rpi} after entry or the geometric
/// approach V_{t+1} - c_rpi <= beta (V_t - c_rpi) outside the set.
std::vector<MonitorViolation> MonitorRpi(const std::vector<StepRecord>& records,
                                         const SymMatrix& p_star, double c_rpi,
                                         double beta);

struct SeedComparison {
  std::uint64_t seed{};
  double adaptive_cost{};
  double static_cost{};
  double improvement{};
};

struct ComparisonReport {
  std::vector<SeedComparison> per_seed;
  /// Mean over seeds of (static - adaptive) / static.
  double mean_improvement{};
  /// (mean static - mean adaptive) / mean static.
  double improvement_of_means{};
};

ComparisonReport CompareCosts(const std::vector<RunSummary>& adaptive,
                              const std::vector<RunSummary>& statics);

/// Runs independent jobs on a worker pool; results keep the job order.
std::vector<RunSummary> RunParallel(
    const std::vector<std::function<RunSummary()>>& jobs, int workers = 0);

}  // namespace ddmpc
