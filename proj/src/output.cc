#include "ddmpc/output.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"

namespace ddmpc {

using Json = nlohmann::ordered_json;

namespace {

constexpr double kConstraintTol = 1e-6;

}  // namespace

std::string FormatReal(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string TrajectoryCsv(const std::vector<StepRecord>& records, int n, int m,
                          bool include_timing) {
  std::ostringstream out;
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x_" << i;
  for (int i = 1; i <= m; ++i) out << ",u_" << i;
  out << ",gamma,V,constraint_value,controller_source,solve_time_ms\n";
  for (const StepRecord& r : records) {
    if (r.x.size() != n || (r.has_input() && r.u.size() != m)) {
      throw std::invalid_argument("TrajectoryCsv: record dimension mismatch");
    }
    out << r.t;
    for (int i = 0; i < n; ++i) out << ',' << FormatReal(r.x(i));
    for (int i = 0; i < m; ++i) {
      out << ',';
      if (r.has_input()) out << FormatReal(r.u(i));
    }
    out << ',' << (r.gamma ? FormatReal(*r.gamma) : "");
    out << ',' << FormatReal(r.lyapunov_value);
    out << ',' << (r.has_input() ? FormatReal(r.constraint_value) : "");
    out << ',' << (r.source ? ToString(*r.source) : "");
    out << ',' << (include_timing && r.has_input() ? FormatReal(r.solve_time_ms)
                                                   : "");
    out << '\n';
  }
  return out.str();
}

bool BatchReport::monitors_ok() const {
  for (const auto* list : {&runs, &static_runs}) {
    for (const RunReport& r : *list) {
      if (!r.monitors_ok()) return false;
    }
  }
  return true;
}

RunReport AnalyzeRun(RunSummary summary, const Weights& weights) {
  RunReport rep;
  const bool noisy = IsNoisyMode(summary.mode);
  if (summary.p_star && !noisy) {
    rep.lyapunov.checked = true;
    rep.lyapunov.violations =
        MonitorLyapunov(summary.records, *summary.p_star, weights);
  }
  if (summary.p_star && noisy && summary.c_rpi && summary.beta) {
    rep.rpi.checked = true;
    rep.rpi.violations = MonitorRpi(summary.records, *summary.p_star,
                                    *summary.c_rpi, *summary.beta);
  }
  rep.constraint_ok = summary.max_constraint_value <= 1.0 + kConstraintTol;
  if (summary.mode == LoopMode::kBootstrap) {
    std::optional<int> from;
    for (const StepRecord& r : summary.records) {
      if (!r.has_input()) continue;
      if (r.source == ControllerSource::kAdaptive) {
        if (!from) from = r.t;
      } else {
        from.reset();
      }
    }
    rep.feasible_from = from;
  }
  rep.summary = std::move(summary);
  return rep;
}

namespace {

LoopMode StaticCounterpart(LoopMode mode) {
  return IsNoisyMode(mode) ? LoopMode::kStaticNoisy : LoopMode::kStatic;
}

std::vector<RunReport> RunSeeds(const ScenarioConfig& config, LoopMode mode,
                                const BatchOptions& options) {
  const ProblemSetup setup = BuildSetup(config);
  std::vector<std::function<RunSummary()>> jobs;
  for (std::uint64_t seed : options.seeds) {
    jobs.push_back([&config, &setup, &options, mode, seed]() {
      LoopConfig cfg = config.loop;
      cfg.mode = mode;
      cfg.seed = seed;
      std::unique_ptr<PlantModel> plant = MakePlant(config, seed);
      return RunMode(*plant, setup, cfg, options.ctx);
    });
  }
  std::vector<RunSummary> summaries = RunParallel(jobs, options.workers);
  std::vector<RunReport> out;
  for (RunSummary& s : summaries) {
    out.push_back(AnalyzeRun(std::move(s), setup.weights));
  }
  return out;
}

}  // namespace

BatchReport RunBatch(const ScenarioConfig& config,
                     const BatchOptions& options) {
  if (options.seeds.empty()) throw ParameterError("batch: no seeds");
  BatchReport batch;
  batch.scenario = config.name;
  batch.mode = config.loop.mode;
  batch.steps = config.loop.steps;
  batch.seeds = options.seeds;
  try {
    batch.runs = RunSeeds(config, batch.mode, options);
  } catch (const InitialInfeasibleError& e) {
    if (!options.bootstrap_on_infeasible) throw;
    batch.switched_to_bootstrap = true;
    batch.initial_detail = e.what();
    batch.mode = LoopMode::kBootstrap;
    batch.runs = RunSeeds(config, batch.mode, options);
  }
  if (options.compare_static && batch.mode != LoopMode::kBootstrap) {
    batch.static_runs = RunSeeds(config, StaticCounterpart(batch.mode), options);
    std::vector<RunSummary> a, s;
    for (const RunReport& r : batch.runs) a.push_back(r.summary);
    for (const RunReport& r : batch.static_runs) s.push_back(r.summary);
    batch.comparison = CompareCosts(a, s);
  }
  return batch;
}

namespace {

Json Optional(const std::optional<double>& v) {
  return v ? Json(*v) : Json(nullptr);
}

Json Optional(const std::optional<int>& v) {
  return v ? Json(*v) : Json(nullptr);
}

Json MonitorJson(const MonitorReport& m) {
  Json j = Json::object();
  j["checked"] = m.checked;
  j["ok"] = m.ok();
  Json v = Json::array();
  for (const MonitorViolation& x : m.violations) {
    v.push_back({{"t", x.t}, {"excess", x.excess}});
  }
  j["violations"] = v;
  return j;
}

Json RunJson(const RunReport& r, bool include_timing) {
  const RunSummary& s = r.summary;
  Json j = Json::object();
  j["seed"] = s.seed;
  j["mode"] = ToString(s.mode);
  j["csv"] = r.csv_file;
  j["closed_loop_cost"] = s.closed_loop_cost;
  j["max_constraint_value"] = s.max_constraint_value;
  j["final_state_norm"] = s.final_state_norm;
  j["fallback_count"] = s.fallback_count;
  j["infeasible_count"] = s.infeasible_count;
  j["numerical_fallback_count"] = s.numerical_fallback_count;
  j["synthesized_steps"] = s.synthesized_steps;
  j["first_synthesis_step"] = Optional(s.first_synthesis_step);
  j["initial_feasible"] = s.initial_feasible;
  j["initial_detail"] = s.initial_detail;
  if (s.p_star) j["gamma_p"] = s.gamma_p;
  j["c"] = Optional(s.c);
  j["c_rpi"] = Optional(s.c_rpi);
  j["beta"] = Optional(s.beta);
  j["rpi_entry_time"] = Optional(s.rpi_entry_time);
  if (s.mode == LoopMode::kBootstrap) {
    j["feasible_from"] = Optional(r.feasible_from);
  }
  Json mon = Json::object();
  mon["lyapunov"] = MonitorJson(r.lyapunov);
  mon["rpi"] = MonitorJson(r.rpi);
  mon["constraint"] = {{"ok", r.constraint_ok}};
  j["monitors"] = mon;
  if (include_timing) {
    double total = 0;
    for (const StepRecord& rec : s.records) total += rec.solve_time_ms;
    j["total_solve_time_ms"] = total;
  }
  return j;
}

}  // namespace

std::string SummaryJson(const BatchReport& batch, bool include_timing) {
  Json j = Json::object();
  j["schema"] = 1;
  j["scenario"] = batch.scenario;
  j["mode"] = ToString(batch.mode);
  j["steps"] = batch.steps;
  j["seeds"] = batch.seeds;
  j["switched_to_bootstrap"] = batch.switched_to_bootstrap;
  if (batch.switched_to_bootstrap) j["initial_detail"] = batch.initial_detail;
  j["monitors_ok"] = batch.monitors_ok();
  Json runs = Json::array();
  for (const RunReport& r : batch.runs) runs.push_back(RunJson(r, include_timing));
  j["runs"] = runs;
  if (!batch.static_runs.empty()) {
    Json st = Json::array();
    for (const RunReport& r : batch.static_runs) {
      st.push_back(RunJson(r, include_timing));
    }
    j["static_runs"] = st;
  }
  if (batch.comparison) {
    const ComparisonReport& c = *batch.comparison;
    Json cmp = Json::object();
    cmp["mean_improvement"] = c.mean_improvement;
    cmp["mean_improvement_percent"] = 100.0 * c.mean_improvement;
    cmp["improvement_of_means"] = c.improvement_of_means;
    Json per = Json::array();
    for (const SeedComparison& s : c.per_seed) {
      per.push_back({{"seed", s.seed},
                     {"adaptive_cost", s.adaptive_cost},
                     {"static_cost", s.static_cost},
                     {"improvement", s.improvement}});
    }
    cmp["per_seed"] = per;
    j["comparison"] = cmp;
  }
  if (batch.mode == LoopMode::kBootstrap && !batch.runs.empty()) {
    std::optional<int> worst;
    bool all = true;
    for (const RunReport& r : batch.runs) {
      if (!r.feasible_from) {
        all = false;
      } else if (!worst || *r.feasible_from > *worst) {
        worst = r.feasible_from;
      }
    }
    j["bootstrap_feasible_from"] = all ? Optional(worst) : Json(nullptr);
  }
  return j.dump(2) + "\n";
}

std::string StateNormCsv(const std::vector<RunReport>& runs,
                         const std::string& family) {
  std::ostringstream out;
  out << "family,seed,t,state_norm\n";
  for (const RunReport& r : runs) {
    for (const StepRecord& rec : r.summary.records) {
      out << family << ',' << r.summary.seed << ',' << rec.t << ','
          << FormatReal(rec.x.norm()) << '\n';
    }
  }
  return out.str();
}

std::string InputCsv(const std::vector<RunReport>& runs,
                     const std::string& family, int m) {
  std::ostringstream out;
  out << "family,seed,t";
  for (int i = 1; i <= m; ++i) out << ",u_" << i;
  out << '\n';
  for (const RunReport& r : runs) {
    for (const StepRecord& rec : r.summary.records) {
      if (!rec.has_input()) continue;
      out << family << ',' << r.summary.seed << ',' << rec.t;
      for (int i = 0; i < m; ++i) out << ',' << FormatReal(rec.u(i));
      out << '\n';
    }
  }
  return out.str();
}

std::string OverlayCsv(const std::vector<RunReport>& adaptive,
                       const std::vector<RunReport>& statics) {
  std::ostringstream out;
  out << "seed,t,adaptive_state_norm,static_state_norm\n";
  for (const RunReport& a : adaptive) {
    for (const RunReport& s : statics) {
      if (s.summary.seed != a.summary.seed) continue;
      const auto& ra = a.summary.records;
      const auto& rs = s.summary.records;
      for (size_t k = 0; k < std::min(ra.size(), rs.size()); ++k) {
        out << a.summary.seed << ',' << ra[k].t << ','
            << FormatReal(ra[k].x.norm()) << ',' << FormatReal(rs[k].x.norm())
            << '\n';
      }
    }
  }
  return out.str();
}

void WriteFile(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << contents;
  out.close();
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

std::vector<std::string> EmitPlotData(const BatchReport& batch, int m,
                                      const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string family = ToString(batch.mode);
  std::string norms = StateNormCsv(batch.runs, family);
  std::string inputs = InputCsv(batch.runs, family, m);
  if (!batch.static_runs.empty()) {
    const std::string sf = ToString(batch.static_runs.front().summary.mode);
    // Append the static family without repeating the header.
    const std::string sn = StateNormCsv(batch.static_runs, sf);
    const std::string si = InputCsv(batch.static_runs, sf, m);
    norms += sn.substr(sn.find('\n') + 1);
    inputs += si.substr(si.find('\n') + 1);
  }
  std::vector<std::string> written = {"state_norms.csv", "inputs.csv"};
  WriteFile((fs::path(dir) / "state_norms.csv").string(), norms);
  WriteFile((fs::path(dir) / "inputs.csv").string(), inputs);
  if (!batch.static_runs.empty()) {
    WriteFile((fs::path(dir) / "overlay.csv").string(),
              OverlayCsv(batch.runs, batch.static_runs));
    written.push_back("overlay.csv");
  }
  return written;
}

}  // namespace ddmpc
