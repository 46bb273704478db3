#include "ddmpc/controlloop.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

namespace ddmpc {

const char* ToString(LoopMode mode) {
  switch (mode) {
    case LoopMode::kAdaptive:
      return "adaptive";
    case LoopMode::kStatic:
      return "static";
    case LoopMode::kBootstrap:
      return "bootstrap";
    case LoopMode::kAdaptiveNoisy:
      return "adaptive_noisy";
    case LoopMode::kStaticNoisy:
      return "static_noisy";
  }
  return "unknown";
}

LoopMode ParseLoopMode(const std::string& s) {
  for (LoopMode m : {LoopMode::kAdaptive, LoopMode::kStatic,
                     LoopMode::kBootstrap, LoopMode::kAdaptiveNoisy,
                     LoopMode::kStaticNoisy}) {
    if (s == ToString(m)) return m;
  }
  throw ParameterError("unknown mode '" + s + "'");
}

bool IsNoisyMode(LoopMode mode) {
  return mode == LoopMode::kAdaptiveNoisy || mode == LoopMode::kStaticNoisy;
}

const char* ToString(ControllerSource source) {
  switch (source) {
    case ControllerSource::kInitial:
      return "initial";
    case ControllerSource::kAdaptive:
      return "adaptive";
    case ControllerSource::kBackupFallback:
      return "backup_fallback";
    case ControllerSource::kExcitation:
      return "excitation";
    case ControllerSource::kStoppedStatic:
      return "stopped_static";
  }
  return "unknown";
}

void LoopConfig::Validate() const {
  if (steps < 1) throw ParameterError("loop: steps must be >= 1");
  if (window_length && *window_length < 0) {
    throw ParameterError("loop: window length must be >= 0");
  }
  if (mode == LoopMode::kBootstrap && excitation_steps < 1) {
    throw ParameterError("loop: bootstrap mode needs excitation_steps >= 1");
  }
  if (!(input_min <= input_max)) {
    throw ParameterError("loop: empty excitation input range");
  }
  if (stop_threshold && !(*stop_threshold >= 0)) {
    throw ParameterError("loop: stop threshold must be >= 0");
  }
  if (c && !(*c > 0)) throw ParameterError("loop: c must be positive");
}

bool LoopConfig::operator==(const LoopConfig& o) const {
  return steps == o.steps && window_length == o.window_length &&
         mode == o.mode && excitation_steps == o.excitation_steps &&
         input_min == o.input_min && input_max == o.input_max &&
         stop_threshold == o.stop_threshold && seed == o.seed && c == o.c &&
         zero_noise == o.zero_noise;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::optional<int> ResolveWindow(const LoopConfig& cfg,
                                 const VariationProfile& profile) {
  if (!cfg.window_length) return profile.DefaultWindow();
  if (*cfg.window_length == 0) return std::nullopt;
  return cfg.window_length;
}

double ZeroThreshold(const ProblemSetup& setup) {
  return 1e-8 * (1.0 + setup.x0.norm());
}

void CheckSetup(const PlantModel& plant, const ProblemSetup& setup,
                const LoopConfig& cfg) {
  cfg.Validate();
  setup.weights.Validate();
  const int n = setup.weights.state_dim();
  const int m = setup.weights.input_dim();
  if (plant.state_dim() != n || plant.input_dim() != m) {
    throw ParameterError("plant dimensions do not match the weights");
  }
  if (setup.x0.size() != n) throw ParameterError("x0 has wrong dimension");
  if (setup.profile.state_dim() != n || setup.profile.input_dim() != m) {
    throw ParameterError("variation profile dimensions do not match");
  }
}

// Finalizes aggregate fields from the records.
void Finish(RunSummary* s, const Weights& w, const Vector& final_state,
            int steps) {
  StepRecord last;
  last.t = steps;
  last.x = final_state;
  last.u = Vector();
  last.lyapunov_value = s->p_star ? QuadForm(*s->p_star, final_state) : kNaN;
  last.constraint_value = 0.0;
  s->records.push_back(last);
  s->closed_loop_cost = RecomputeCost(s->records, w);
  s->max_constraint_value = 0.0;
  for (const StepRecord& r : s->records) {
    if (r.has_input()) {
      s->max_constraint_value =
          std::max(s->max_constraint_value, r.constraint_value);
    }
  }
  s->final_state_norm = final_state.norm();
  if (s->c_rpi) {
    for (const StepRecord& r : s->records) {
      if (r.lyapunov_value <= *s->c_rpi) {
        s->rpi_entry_time = r.t;
        break;
      }
    }
  }
}

// Shared implementation of the adaptive and static loops.
RunSummary RunPriorBased(PlantModel& plant, const ProblemSetup& setup,
                         const LoopConfig& cfg, bool noisy, bool adaptive,
                         const SynthesisContext& ctx_in) {
  CheckSetup(plant, setup, cfg);
  if (noisy && !setup.noise) {
    throw ParameterError("noisy mode requires a noise bound");
  }
  SynthesisContext ctx = ctx_in;
  ctx.zero_threshold = ZeroThreshold(setup);
  const Weights& w = setup.weights;

  RunSummary s;
  s.mode = cfg.mode;
  s.seed = cfg.seed;

  SynthesisResult initial;
  double c = 0;
  if (noisy) {
    if (cfg.c) {
      c = *cfg.c;
      initial = SolveInitialNoisy(setup.x0, setup.prior, w, c, ctx);
    } else {
      NoiseConstantChoice choice =
          ChooseNoiseConstant(setup.x0, setup.prior, w, ctx);
      c = choice.c;
      initial = std::move(choice.initial);
    }
  } else {
    initial = SolveInitial(setup.x0, setup.prior, w, ctx);
  }
  s.initial_feasible = initial.optimal();
  s.initial_detail = initial.detail;
  if (!initial.optimal()) {
    throw InitialInfeasibleError(
        std::string("initial synthesis problem is ") +
            ToString(initial.status) +
            " (consider bootstrap mode): " + initial.detail,
        initial.status);
  }
  const TerminalCost terminal(initial.p);
  s.gamma_p = initial.gamma;
  s.p_star = initial.p;
  s.f_p = initial.f;
  s.initial = initial;
  if (noisy) {
    s.c = c;
    const double qmin = GetSpectralBounds(w.q).lambda_min;
    const double gmin = GetSpectralBounds(setup.noise->g).lambda_min;
    s.c_rpi = c * c / (qmin * gmin);
    s.beta = 1.0 - qmin / c;
  }

  std::optional<NoiseGenerator> noise_gen;
  if (noisy) {
    noise_gen.emplace(*setup.noise,
                      Rng::ForStream(cfg.seed, RngStream::kNoise));
  }
  DataWindow window(ResolveWindow(cfg, setup.profile));
  Vector x = setup.x0;
  bool stopped = false;
  for (int t = 0; t < cfg.steps; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.x = x;
    rec.lyapunov_value = QuadForm(initial.p, x);
    if (!stopped && cfg.stop_threshold && x.norm() <= *cfg.stop_threshold) {
      stopped = true;
    }
    Matrix f = initial.f;
    if (stopped) {
      rec.source = ControllerSource::kStoppedStatic;
    } else if (t == 0 || !adaptive) {
      rec.source = ControllerSource::kInitial;
      if (t == 0) {
        rec.gamma = initial.gamma;
        rec.bound_value = QuadForm(initial.p, x);
        rec.lmi_residual_min = initial.MinResidual();
        rec.solve_time_ms = initial.solve_time_ms;
        rec.solver_status = initial.status;
      }
    } else {
      SynthesisResult r =
          noisy ? SolveAdaptiveNoisy(x, setup.prior, window, setup.profile,
                                     *setup.noise, terminal, w, c, ctx)
                : SolveAdaptive(x, setup.prior, window, setup.profile,
                                terminal, w, ctx);
      rec.solve_time_ms = r.solve_time_ms;
      rec.solver_status = r.status;
      if (r.program) rec.candidate_residual = CandidateResidual(*r.program, initial);
      if (r.optimal()) {
        f = r.f;
        rec.source = ControllerSource::kAdaptive;
        rec.gamma = r.gamma;
        rec.bound_value = QuadForm(r.p, x);
        rec.lmi_residual_min = r.MinResidual();
        ++s.synthesized_steps;
        if (!s.first_synthesis_step) s.first_synthesis_step = t;
      } else {
        rec.source = ControllerSource::kBackupFallback;
        ++s.fallback_count;
        const bool candidate_fails =
            !rec.candidate_residual || *rec.candidate_residual < -1e-7;
        if (r.status == SolverStatus::kInfeasible && candidate_fails) {
          ++s.infeasible_count;
        } else {
          ++s.numerical_fallback_count;
        }
      }
    }
    const Vector u = f * x;
    rec.u = u;
    rec.constraint_value = w.ConstraintValue(x, u);
    Vector noise_sample;
    if (noise_gen) {
      noise_sample = noise_gen->Sample();
      if (cfg.zero_noise) noise_sample.setZero();
    }
    const Vector x_next =
        plant.Step(t, x, u, noise_gen ? &noise_sample : nullptr);
    window.Append({x, u, x_next, t});
    s.records.push_back(std::move(rec));
    x = x_next;
  }
  Finish(&s, w, x, cfg.steps);
  return s;
}

// Uniform excitation input, shrunk toward zero if it violates the constraint.
Vector ExcitationInput(const Vector& x, const Weights& w,
                       const LoopConfig& cfg, Rng& rng) {
  const int m = w.input_dim();
  Vector u(m);
  for (int i = 0; i < m; ++i) u(i) = rng.Uniform(cfg.input_min, cfg.input_max);
  if (w.ConstraintValue(x, u) <= 1.0) return u;
  if (w.ConstraintValue(x, Vector::Zero(m)) > 1.0) return Vector::Zero(m);
  double lo = 0.0, hi = 1.0;
  for (int k = 0; k < 60; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (w.ConstraintValue(x, mid * u) <= 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo * u;
}

}  // namespace

RunSummary RunAlgorithm1(PlantModel& plant, const ProblemSetup& setup,
                         const LoopConfig& cfg, const SynthesisContext& ctx) {
  if (cfg.mode != LoopMode::kAdaptive) {
    throw ParameterError("RunAlgorithm1 requires adaptive mode");
  }
  return RunPriorBased(plant, setup, cfg, false, true, ctx);
}

RunSummary RunAlgorithm2(PlantModel& plant, const ProblemSetup& setup,
                         const LoopConfig& cfg, const SynthesisContext& ctx) {
  if (cfg.mode != LoopMode::kAdaptiveNoisy) {
    throw ParameterError("RunAlgorithm2 requires adaptive_noisy mode");
  }
  return RunPriorBased(plant, setup, cfg, true, true, ctx);
}

RunSummary RunStatic(PlantModel& plant, const ProblemSetup& setup,
                     const LoopConfig& cfg, bool noisy,
                     const SynthesisContext& ctx) {
  return RunPriorBased(plant, setup, cfg, noisy, false, ctx);
}

RunSummary RunBootstrap(PlantModel& plant, const ProblemSetup& setup,
                        const LoopConfig& cfg, const SynthesisContext& ctx_in) {
  CheckSetup(plant, setup, cfg);
  if (cfg.excitation_steps < 1) {
    throw ParameterError("bootstrap: no excitation steps, nothing to learn from");
  }
  SynthesisContext ctx = ctx_in;
  ctx.zero_threshold = ZeroThreshold(setup);
  const Weights& w = setup.weights;
  RunSummary s;
  s.mode = cfg.mode;
  s.seed = cfg.seed;

  const SynthesisResult initial = SolveInitial(setup.x0, setup.prior, w, ctx);
  s.initial_feasible = initial.optimal();
  s.initial_detail = std::string(ToString(initial.status)) +
                     (initial.detail.empty() ? "" : ": " + initial.detail);

  Rng rng = Rng::ForStream(cfg.seed, RngStream::kExcitation);
  DataWindow window(ResolveWindow(cfg, setup.profile));
  Vector x = setup.x0;
  for (int t = 0; t < cfg.steps; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.x = x;
    rec.lyapunov_value = kNaN;
    Vector u;
    if (t >= cfg.excitation_steps) {
      const SynthesisResult r =
          SolveBootstrap(x, setup.prior, window, setup.profile, w, ctx);
      rec.solve_time_ms = r.solve_time_ms;
      rec.solver_status = r.status;
      if (r.optimal()) {
        u = r.f * x;
        rec.source = ControllerSource::kAdaptive;
        rec.gamma = r.gamma;
        rec.bound_value = QuadForm(r.p, x);
        rec.lmi_residual_min = r.MinResidual();
        ++s.synthesized_steps;
        if (!s.first_synthesis_step) s.first_synthesis_step = t;
      } else if (r.status == SolverStatus::kInfeasible) {
        ++s.infeasible_count;
      } else {
        ++s.numerical_fallback_count;
      }
    }
    if (!rec.source) {
      u = ExcitationInput(x, w, cfg, rng);
      rec.source = ControllerSource::kExcitation;
    }
    rec.u = u;
    rec.constraint_value = w.ConstraintValue(x, u);
    const Vector x_next = plant.Step(t, x, u);
    window.Append({x, u, x_next, t});
    s.records.push_back(std::move(rec));
    x = x_next;
  }
  Finish(&s, w, x, cfg.steps);
  return s;
}

RunSummary RunMode(PlantModel& plant, const ProblemSetup& setup,
                   const LoopConfig& cfg, const SynthesisContext& ctx) {
  switch (cfg.mode) {
    case LoopMode::kAdaptive:
      return RunAlgorithm1(plant, setup, cfg, ctx);
    case LoopMode::kAdaptiveNoisy:
      return RunAlgorithm2(plant, setup, cfg, ctx);
    case LoopMode::kStatic:
      return RunStatic(plant, setup, cfg, false, ctx);
    case LoopMode::kStaticNoisy:
      return RunStatic(plant, setup, cfg, true, ctx);
    case LoopMode::kBootstrap:
      return RunBootstrap(plant, setup, cfg, ctx);
  }
  throw ParameterError("unknown loop mode");
}

double RecomputeCost(const std::vector<StepRecord>& records,
                     const Weights& weights) {
  double cost = 0;
  for (const StepRecord& r : records) {
    if (r.has_input()) cost += weights.StageCost(r.u, r.x);
  }
  return cost;
}

std::vector<MonitorViolation> MonitorLyapunov(
    const std::vector<StepRecord>& records, const SymMatrix& p_star,
    const Weights& weights) {
  std::vector<MonitorViolation> out;
  for (size_t i = 0; i + 1 < records.size(); ++i) {
    const StepRecord& r = records[i];
    if (!r.has_input()) continue;
    const double v0 = QuadForm(p_star, r.x);
    const double v1 = QuadForm(p_star, records[i + 1].x);
    const double excess =
        v1 - v0 + weights.StageCost(r.u, r.x) - 1e-6 * (1.0 + v0);
    if (excess > 0) out.push_back({r.t, excess});
  }
  return out;
}

std::vector<MonitorViolation> MonitorRpi(const std::vector<StepRecord>& records,
                                         const SymMatrix& p_star, double c_rpi,
                                         double beta) {
  std::vector<MonitorViolation> out;
  bool entered = false;
  for (size_t i = 0; i < records.size(); ++i) {
    const double v = QuadForm(p_star, records[i].x);
    if (entered && v > c_rpi + 1e-6) {
      out.push_back({records[i].t, v - c_rpi - 1e-6});
    }
    if (v <= c_rpi) entered = true;
    if (i + 1 < records.size() && v > c_rpi) {
      const double v1 = QuadForm(p_star, records[i + 1].x);
      const double excess = (v1 - c_rpi) - beta * (v - c_rpi) - 1e-6;
      if (excess > 0) out.push_back({records[i].t, excess});
    }
  }
  return out;
}

ComparisonReport CompareCosts(const std::vector<RunSummary>& adaptive,
                              const std::vector<RunSummary>& statics) {
  std::set<std::uint64_t> sa, ss;
  for (const RunSummary& r : adaptive) sa.insert(r.seed);
  for (const RunSummary& r : statics) ss.insert(r.seed);
  if (sa != ss || sa.size() != adaptive.size() ||
      ss.size() != statics.size() || adaptive.empty()) {
    throw ParameterError("CompareCosts: seed sets do not match");
  }
  ComparisonReport rep;
  double sum_a = 0, sum_s = 0;
  for (const RunSummary& a : adaptive) {
    const auto it = std::find_if(statics.begin(), statics.end(),
                                 [&](const RunSummary& s) { return s.seed == a.seed; });
    SeedComparison c;
    c.seed = a.seed;
    c.adaptive_cost = a.closed_loop_cost;
    c.static_cost = it->closed_loop_cost;
    c.improvement = c.static_cost > 0
                        ? (c.static_cost - c.adaptive_cost) / c.static_cost
                        : 0.0;
    rep.per_seed.push_back(c);
    rep.mean_improvement += c.improvement;
    sum_a += c.adaptive_cost;
    sum_s += c.static_cost;
  }
  rep.mean_improvement /= static_cast<double>(rep.per_seed.size());
  rep.improvement_of_means = sum_s > 0 ? (sum_s - sum_a) / sum_s : 0.0;
  return rep;
}

std::vector<RunSummary> RunParallel(
    const std::vector<std::function<RunSummary()>>& jobs, int workers) {
  std::vector<RunSummary> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  if (workers <= 0) {
    workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
  workers = std::min<int>(workers, static_cast<int>(jobs.size()));
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = jobs[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < workers; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace ddmpc
