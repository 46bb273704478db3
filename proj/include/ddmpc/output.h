#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ddmpc/controlloop.h"
#include "ddmpc/scenario.h"

namespace ddmpc {

/// Decimal text with 12 significant digits; empty for NaN.
std::string FormatReal(double v);

/// One row per record. The final state-only record leaves the input, gamma,
/// constraint and source fields empty. solve_time_ms is left empty unless
/// `include_timing` is set, which keeps default output byte-deterministic.
std::string TrajectoryCsv(const std::vector<StepRecord>& records, int n, int m,
                          bool include_timing = false);

struct MonitorReport {
  bool checked{false};
  std::vector<MonitorViolation> violations;

  bool ok() const { return violations.empty(); }
};

struct RunReport {
  RunSummary summary;
  MonitorReport lyapunov;
  MonitorReport rpi;
  /// max constraint value <= 1 + 1e-6.
  bool constraint_ok{true};
  /// Bootstrap: first step from which every later step was synthesized.
  std::optional<int> feasible_from;
  std::string csv_file;

  bool monitors_ok() const {
    return lyapunov.ok() && rpi.ok() && constraint_ok;
  }
};

struct BatchOptions {
  std::vector<std::uint64_t> seeds;
  bool compare_static{false};
  /// Switch to bootstrap mode when the prior-only problem is infeasible.
  bool bootstrap_on_infeasible{false};
  int workers{0};
  SynthesisContext ctx;
};

struct BatchReport {
  std::string scenario;
  LoopMode mode{};
  int steps{};
  std::vector<std::uint64_t> seeds;
  std::vector<RunReport> runs;
  std::vector<RunReport> static_runs;
  std::optional<ComparisonReport> comparison;
  /// Set when the requested mode was replaced by bootstrap mode.
  bool switched_to_bootstrap{false};
  std::string initial_detail;

  bool monitors_ok() const;
};

/// Computes the monitors applicable to the run's mode.
RunReport AnalyzeRun(RunSummary summary, const Weights& weights);

/// Runs config.loop.mode for every seed (and the static baseline when
/// requested), in parallel, ordered by seed. Propagates
/// InitialInfeasibleError unless bootstrap_on_infeasible is set.
BatchReport RunBatch(const ScenarioConfig& config, const BatchOptions& options);

/// Schema-versioned JSON summary of a batch.
std::string SummaryJson(const BatchReport& batch, bool include_timing = false);

/// "family,seed,t,state_norm" rows.
std::string StateNormCsv(const std::vector<RunReport>& runs,
                         const std::string& family);
/// "family,seed,t,u_1..u_m" rows.
std::string InputCsv(const std::vector<RunReport>& runs,
                     const std::string& family, int m);
/// "seed,t,adaptive_state_norm,static_state_norm" rows for paired runs.
std::string OverlayCsv(const std::vector<RunReport>& adaptive,
                       const std::vector<RunReport>& statics);

/// Writes `contents` to `path`; throws std::runtime_error on I/O failure.
void WriteFile(const std::string& path, const std::string& contents);

/// Writes state_norms.csv, inputs.csv and (for paired batches) overlay.csv
/// into `dir`. Returns the written file names.
std::vector<std::string> EmitPlotData(const BatchReport& batch, int m,
                                      const std::string& dir);

}  // namespace ddmpc
