#include "ddmpc/controlloop.h"

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "ddmpc/scenario.h"

namespace ddmpc {
namespace {

RunSummary RunPreset(ScenarioConfig config, std::uint64_t seed = 0) {
  config.loop.seed = seed;
  const ProblemSetup setup = BuildSetup(config);
  std::unique_ptr<PlantModel> plant = MakePlant(config, seed);
  return RunMode(*plant, setup, config.loop);
}

ScenarioConfig Short(const std::string& preset, int steps) {
  ScenarioConfig c = Preset(preset);
  c.loop.steps = steps;
  return c;
}

TEST(LoopModeTest, ParseRoundTrip) {
  for (LoopMode m : {LoopMode::kAdaptive, LoopMode::kStatic,
                     LoopMode::kBootstrap, LoopMode::kAdaptiveNoisy,
                     LoopMode::kStaticNoisy}) {
    EXPECT_EQ(ParseLoopMode(ToString(m)), m);
  }
  EXPECT_THROW(ParseLoopMode("bogus"), ParameterError);
  EXPECT_TRUE(IsNoisyMode(LoopMode::kStaticNoisy));
  EXPECT_FALSE(IsNoisyMode(LoopMode::kBootstrap));
}

TEST(LoopConfigTest, Validation) {
  LoopConfig cfg;
  EXPECT_NO_THROW(cfg.Validate());
  cfg.steps = 0;
  EXPECT_THROW(cfg.Validate(), ParameterError);
  cfg = LoopConfig{};
  cfg.mode = LoopMode::kBootstrap;
  cfg.excitation_steps = 0;
  EXPECT_THROW(cfg.Validate(), ParameterError);
  cfg = LoopConfig{};
  cfg.c = -1.0;
  EXPECT_THROW(cfg.Validate(), ParameterError);
  cfg = LoopConfig{};
  cfg.input_min = 1.0;
  cfg.input_max = -1.0;
  EXPECT_THROW(cfg.Validate(), ParameterError);
}

TEST(ControlLoopTest, RecordsAreConsistent) {
  const ScenarioConfig config = Short("viA_lipschitz", 15);
  const RunSummary s = RunPreset(config);
  ASSERT_EQ(s.records.size(), 16u);
  EXPECT_TRUE(s.initial_feasible);
  EXPECT_FALSE(s.records.back().has_input());
  const Weights w = BuildWeights(config);
  EXPECT_NEAR(RecomputeCost(s.records, w), s.closed_loop_cost,
              1e-12 * std::max(1.0, s.closed_loop_cost));
  // Replaying the recorded inputs on a fresh plant reproduces the states.
  std::unique_ptr<PlantModel> plant = MakePlant(config, 0);
  for (size_t t = 0; t + 1 < s.records.size(); ++t) {
    const Vector next = plant->Step(static_cast<int>(t), s.records[t].x,
                                    s.records[t].u);
    EXPECT_LT((next - s.records[t + 1].x).norm(), 1e-12) << t;
    EXPECT_LE(s.records[t].constraint_value, 1.0 + 1e-6) << t;
  }
  EXPECT_EQ(s.records[0].source, ControllerSource::kInitial);
  EXPECT_NEAR(*s.records[0].gamma, s.gamma_p, 0.0);
}

// The backup solution is always admissible, so the adaptive cost bound
// never exceeds the prior-only one and no step falls back.
TEST(ControlLoopTest, AdaptiveStepsDominateBackup) {
  for (const char* preset : {"viA_lipschitz", "viB_periodic"}) {
    const RunSummary s = RunPreset(Short(preset, 20));
    EXPECT_EQ(s.fallback_count, 0) << preset;
    for (const StepRecord& r : s.records) {
      if (r.source != ControllerSource::kAdaptive) continue;
      ASSERT_TRUE(r.gamma && r.candidate_residual);
      EXPECT_LE(*r.gamma, s.gamma_p + 1e-6) << preset << " t=" << r.t;
      EXPECT_GE(*r.candidate_residual, -1e-7) << preset << " t=" << r.t;
      EXPECT_LE(*r.bound_value, *r.gamma + 1e-6);
    }
    EXPECT_TRUE(MonitorLyapunov(s.records, *s.p_star, BuildWeights(Preset(preset)))
                    .empty())
        << preset;
  }
}

TEST(ControlLoopTest, InfiniteStopThresholdEqualsStatic) {
  ScenarioConfig config = Short("viA_lipschitz", 12);
  config.loop.stop_threshold = std::numeric_limits<double>::infinity();
  const RunSummary stopped = RunPreset(config);
  config.loop.stop_threshold.reset();
  config.loop.mode = LoopMode::kStatic;
  const RunSummary statics = RunPreset(config);
  ASSERT_EQ(stopped.records.size(), statics.records.size());
  for (size_t t = 0; t < stopped.records.size(); ++t) {
    EXPECT_EQ(stopped.records[t].x, statics.records[t].x) << t;
  }
  EXPECT_EQ(stopped.closed_loop_cost, statics.closed_loop_cost);
  EXPECT_EQ(stopped.records[3].source, ControllerSource::kStoppedStatic);
}

TEST(ControlLoopTest, ZeroInitialStateStaysAtZero) {
  ScenarioConfig config = Short("viA_lipschitz", 8);
  config.x0 = Vector::Zero(2);
  const RunSummary s = RunPreset(config);
  for (const StepRecord& r : s.records) {
    EXPECT_EQ(r.x, Vector::Zero(2)) << r.t;
  }
  EXPECT_EQ(s.closed_loop_cost, 0.0);
}

TEST(ControlLoopTest, DeterministicPerSeed) {
  const ScenarioConfig config = Short("viA_lipschitz_noisy", 10);
  const RunSummary a = RunPreset(config, 3);
  const RunSummary b = RunPreset(config, 3);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (size_t t = 0; t < a.records.size(); ++t) {
    EXPECT_EQ(a.records[t].x, b.records[t].x);
  }
  const RunSummary c = RunPreset(config, 4);
  EXPECT_NE(a.records.back().x, c.records.back().x);
}

TEST(ControlLoopTest, ZeroNoiseTracksNoiseFreeRun) {
  ScenarioConfig noisy = Short("viA_lipschitz_noisy", 20);
  noisy.loop.zero_noise = true;
  const RunSummary zero = RunPreset(noisy);
  ScenarioConfig clean = Short("viA_lipschitz", 20);
  const RunSummary base = RunPreset(clean);
  // The noisy design is more conservative, but with the noise removed its
  // closed-loop cost stays close to the noise-free one.
  EXPECT_LE(zero.closed_loop_cost, 1.05 * base.closed_loop_cost);
  EXPECT_LT(zero.final_state_norm, 1e-2);
}

TEST(ControlLoopTest, NoisyRunStaysInvariantAndConstrained) {
  const RunSummary s = RunPreset(Short("viA_lipschitz_noisy", 30), 1);
  ASSERT_TRUE(s.c && s.c_rpi && s.beta && s.p_star);
  EXPECT_GT(*s.beta, 0.0);
  EXPECT_LT(*s.beta, 1.0);
  EXPECT_LE(s.max_constraint_value, 1.0 + 1e-6);
  EXPECT_TRUE(MonitorRpi(s.records, *s.p_star, *s.c_rpi, *s.beta).empty());
}

TEST(MonitorTest, FlagsCorruptedRecord) {
  const ScenarioConfig config = Short("viA_lipschitz", 10);
  RunSummary s = RunPreset(config);
  const Weights w = BuildWeights(config);
  ASSERT_TRUE(MonitorLyapunov(s.records, *s.p_star, w).empty());
  s.records[5].x *= 10.0;
  const std::vector<MonitorViolation> v =
      MonitorLyapunov(s.records, *s.p_star, w);
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v.front().t, 4);
  EXPECT_GT(v.front().excess, 0.0);
  const std::vector<StepRecord> single(s.records.begin(),
                                       s.records.begin() + 1);
  EXPECT_TRUE(MonitorLyapunov(single, *s.p_star, w).empty());
}

TEST(MonitorTest, RpiMonitorFlagsEscape) {
  const RunSummary s = RunPreset(Short("viA_lipschitz_noisy", 20), 2);
  std::vector<StepRecord> records = s.records;
  ASSERT_TRUE(MonitorRpi(records, *s.p_star, *s.c_rpi, *s.beta).empty());
  records[10].x *= 1e3;
  EXPECT_FALSE(MonitorRpi(records, *s.p_star, *s.c_rpi, *s.beta).empty());
}

TEST(BootstrapTest, RequiresExcitationSteps) {
  ScenarioConfig config = Short("viA_widened_bootstrap", 15);
  config.loop.excitation_steps = 0;
  EXPECT_THROW(RunPreset(config), ParameterError);
}

TEST(BootstrapTest, ExcitationThenSynthesis) {
  const ScenarioConfig config = Short("viA_widened_bootstrap", 20);
  const RunSummary s = RunPreset(config);
  for (int t = 0; t < 10; ++t) {
    EXPECT_EQ(s.records[t].source, ControllerSource::kExcitation) << t;
    EXPECT_GE(s.records[t].u(0), config.loop.input_min);
    EXPECT_LE(s.records[t].u(0), config.loop.input_max);
  }
  EXPECT_LE(s.max_constraint_value, 1.0 + 1e-6);
  ASSERT_TRUE(s.first_synthesis_step);
  EXPECT_GE(*s.first_synthesis_step, 10);
}

TEST(CompareCostsTest, IdenticalRunsGiveZero) {
  const RunSummary s = RunPreset(Short("viA_lipschitz", 10));
  const ComparisonReport rep = CompareCosts({s}, {s});
  ASSERT_EQ(rep.per_seed.size(), 1u);
  EXPECT_EQ(rep.mean_improvement, 0.0);
  EXPECT_EQ(rep.improvement_of_means, 0.0);
}

TEST(CompareCostsTest, ImprovementArithmetic) {
  RunSummary a;
  a.seed = 0;
  a.closed_loop_cost = 9.0;
  RunSummary b;
  b.seed = 0;
  b.closed_loop_cost = 10.0;
  RunSummary a1 = a;
  a1.seed = 1;
  a1.closed_loop_cost = 1.0;
  RunSummary b1 = b;
  b1.seed = 1;
  b1.closed_loop_cost = 2.0;
  const ComparisonReport rep = CompareCosts({a, a1}, {b, b1});
  EXPECT_NEAR(rep.mean_improvement, (0.1 + 0.5) / 2, 1e-15);
  EXPECT_NEAR(rep.improvement_of_means, (6.0 - 5.0) / 6.0, 1e-15);
  EXPECT_THROW(CompareCosts({a}, {b1}), ParameterError);
}

TEST(RunParallelTest, KeepsJobOrder) {
  std::vector<std::function<RunSummary()>> jobs;
  for (int i = 0; i < 7; ++i) {
    jobs.push_back([i] {
      RunSummary s;
      s.seed = static_cast<std::uint64_t>(i);
      return s;
    });
  }
  const std::vector<RunSummary> out = RunParallel(jobs, 3);
  ASSERT_EQ(out.size(), 7u);
  for (int i = 0; i < 7; ++i) EXPECT_EQ(out[i].seed, static_cast<std::uint64_t>(i));
}

TEST(RunParallelTest, PropagatesExceptions) {
  std::vector<std::function<RunSummary()>> jobs = {
      [] { return RunSummary{}; },
      []() -> RunSummary { throw ParameterError("boom"); }};
  EXPECT_THROW(RunParallel(jobs, 2), ParameterError);
}

}  // namespace
}  // namespace ddmpc
