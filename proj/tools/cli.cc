#include "cli.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <optional>

#include "CLI11.hpp"
#include "ddmpc/output.h"
#include "ddmpc/scenario.h"

namespace ddmpc {
namespace {

constexpr const char* kOutputEnv = "DDMPC_OUTPUT_DIR";

struct RunFlags {
  std::string scenario;
  std::optional<std::string> mode;
  std::optional<int> steps;
  std::optional<int> seeds;
  std::optional<std::uint64_t> seed;
  std::optional<int> window;
  std::optional<double> c;
  bool bootstrap{false};
  bool compare_static{false};
  bool strict{false};
  std::optional<std::string> output;
  std::optional<double> solver_tol;
  std::optional<int> max_iters;
  bool timing{false};
  int workers{0};
};

std::string DefaultOutputDir() {
  const char* env = std::getenv(kOutputEnv);
  return env && *env ? env : "ddmpc_out";
}

ScenarioConfig ApplyOverrides(ScenarioConfig c, const RunFlags& f) {
  if (f.mode) c.loop.mode = ParseLoopMode(*f.mode);
  if (f.steps) c.loop.steps = *f.steps;
  if (f.seeds) c.seeds = *f.seeds;
  if (f.seed) c.loop.seed = *f.seed;
  if (f.window) c.loop.window_length = *f.window;
  if (f.c) c.loop.c = *f.c;
  if (f.solver_tol) c.solver.feasibility_tol = *f.solver_tol;
  if (f.max_iters) c.solver.max_iterations = *f.max_iters;
  ValidateScenario(c);
  return c;
}

ScenarioConfig LoadWithOverrides(const RunFlags& f) {
  // Overrides are applied before validation so that invalid flag values are
  // reported like invalid config fields.
  const std::vector<std::string> names = PresetNames();
  ScenarioConfig c;
  if (std::find(names.begin(), names.end(), f.scenario) != names.end()) {
    c = Preset(f.scenario);
  } else {
    c = LoadScenario(f.scenario);
  }
  return ApplyOverrides(std::move(c), f);
}

std::vector<std::uint64_t> SeedList(const ScenarioConfig& c) {
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < c.seeds; ++k) seeds.push_back(c.loop.seed + k);
  return seeds;
}

void CheckCompliance(const ScenarioConfig& c) {
  for (std::uint64_t seed : SeedList(c)) {
    const ComplianceReport rep = CheckPlantCompliance(c, seed);
    if (!rep.passed()) {
      throw ConfigError("plant", "seed " + std::to_string(seed) + ": " +
                                     rep.detail);
    }
  }
}

int DoRun(const RunFlags& f, std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  const ScenarioConfig config = LoadWithOverrides(f);
  CheckCompliance(config);
  if (f.compare_static && config.loop.mode == LoopMode::kBootstrap) {
    throw ConfigError("--compare-static",
                      "not available in bootstrap mode (no static baseline)");
  }
  BatchOptions options;
  options.seeds = SeedList(config);
  options.compare_static = f.compare_static;
  options.bootstrap_on_infeasible = f.bootstrap;
  options.workers = f.workers;
  options.ctx.options = config.solver;

  BatchReport batch;
  try {
    batch = RunBatch(config, options);
  } catch (const InitialInfeasibleError& e) {
    err << "error: " << e.what() << "\n"
        << "hint: rerun with --bootstrap or --mode bootstrap\n";
    return kExitInitialInfeasible;
  }

  const fs::path dir = f.output ? fs::path(*f.output) : fs::path(DefaultOutputDir());
  fs::create_directories(dir);
  auto write_runs = [&](std::vector<RunReport>& runs) {
    for (RunReport& r : runs) {
      const std::string file = config.name + "_" +
                               ToString(r.summary.mode) + "_seed" +
                               std::to_string(r.summary.seed) + ".csv";
      WriteFile((dir / file).string(),
                TrajectoryCsv(r.summary.records, config.n, config.m, f.timing));
      r.csv_file = file;
    }
  };
  write_runs(batch.runs);
  write_runs(batch.static_runs);
  EmitPlotData(batch, config.m, dir.string());
  WriteFile((dir / "summary.json").string(), SummaryJson(batch, f.timing));

  out << "scenario " << config.name << ", mode " << ToString(batch.mode)
      << ", " << batch.runs.size() << " run(s)\n";
  if (batch.switched_to_bootstrap) {
    out << "initial problem infeasible; switched to bootstrap mode\n";
  }
  for (const RunReport& r : batch.runs) {
    const RunSummary& s = r.summary;
    out << "  seed " << s.seed << ": cost " << FormatReal(s.closed_loop_cost)
        << ", max constraint " << FormatReal(s.max_constraint_value)
        << ", fallbacks " << s.fallback_count << " (infeasible "
        << s.infeasible_count << ")";
    if (r.feasible_from) out << ", feasible from t = " << *r.feasible_from;
    out << (r.monitors_ok() ? "" : ", MONITOR VIOLATION") << "\n";
  }
  if (batch.comparison) {
    out << "mean improvement over static: "
        << FormatReal(100.0 * batch.comparison->mean_improvement) << "%\n";
  }
  out << "output written to " << dir.string() << "\n";
  if (f.strict && !batch.monitors_ok()) {
    err << "error: runtime monitor violation (--strict)\n";
    return kExitMonitorViolation;
  }
  return kExitOk;
}

int DoValidate(const RunFlags& f, std::ostream& out) {
  const ScenarioConfig config = LoadWithOverrides(f);
  CheckCompliance(config);
  out << config.name << ": ok\n";
  return kExitOk;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Adaptive data-driven min-max MPC synthesis and simulation"};
  app.require_subcommand(1);
  RunFlags flags;

  auto add_scenario_flags = [&flags](CLI::App* sub) {
    sub->add_option("--scenario", flags.scenario,
                    "Preset name or path to a JSON scenario")
        ->required();
    sub->add_option("--mode", flags.mode,
                    "adaptive | static | bootstrap | adaptive_noisy | "
                    "static_noisy");
    sub->add_option("--steps", flags.steps, "Closed-loop steps");
    sub->add_option("--seeds", flags.seeds, "Number of seeds in the batch");
    sub->add_option("--seed", flags.seed, "First seed of the batch");
    sub->add_option("--window", flags.window,
                    "Data window length (0 = unbounded)");
    sub->add_option("--c", flags.c, "Noise constant c (noisy modes)");
    sub->add_option("--solver-tol", flags.solver_tol, "Solver tolerance");
    sub->add_option("--max-iters", flags.max_iters, "Solver iteration limit");
  };

  CLI::App* run = app.add_subcommand("run", "Run closed-loop simulations");
  add_scenario_flags(run);
  run->add_flag("--bootstrap", flags.bootstrap,
                "Switch to bootstrap mode if the initial problem is "
                "infeasible");
  run->add_flag("--compare-static", flags.compare_static,
                "Also run the static baseline and compare costs");
  run->add_flag("--strict", flags.strict,
                "Exit with code 4 on a runtime monitor violation");
  run->add_option("--output", flags.output,
                  std::string("Output directory (default: $") + kOutputEnv +
                      " or ./ddmpc_out)");
  run->add_flag("--timing", flags.timing,
                "Record solve times (output is then not byte-reproducible)");
  run->add_option("--workers", flags.workers,
                  "Parallel workers (0 = hardware concurrency)");

  CLI::App* validate =
      app.add_subcommand("validate", "Validate a scenario and its plant");
  add_scenario_flags(validate);

  CLI::App* presets = app.add_subcommand("presets", "List built-in scenarios");
  std::optional<std::string> show;
  presets->add_option("--show", show, "Print the JSON of one preset");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (presets->parsed()) {
      if (show) {
        out << SerializeScenario(Preset(*show));
      } else {
        for (const std::string& name : PresetNames()) out << name << "\n";
      }
      return kExitOk;
    }
    if (validate->parsed()) return DoValidate(flags, out);
    return DoRun(flags, out, err);
  } catch (const QmiInvariantError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParameterError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericInputError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace ddmpc
