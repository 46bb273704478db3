#include "ddmpc/scenario.h"

#include <cmath>

#include <gtest/gtest.h>

#include "json.hpp"

namespace ddmpc {
namespace {

using Json = nlohmann::json;

// Parses the serialized preset, applies `edit` and parses the result back.
ScenarioConfig Edited(const std::string& preset,
                      const std::function<void(Json&)>& edit) {
  Json j = Json::parse(SerializeScenario(Preset(preset)));
  edit(j);
  return ParseScenarioText(j.dump());
}

std::string ErrorPath(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<no error>";
}

TEST(PresetTest, AllPresetsValidateAndRoundTrip) {
  const std::vector<std::string> names = PresetNames();
  EXPECT_EQ(names.size(), 5u);
  for (const std::string& name : names) {
    const ScenarioConfig c = Preset(name);
    EXPECT_EQ(c.name, name);
    EXPECT_NO_THROW(ValidateScenario(c)) << name;
    const std::string text = SerializeScenario(c);
    const ScenarioConfig back = ParseScenarioText(text);
    EXPECT_TRUE(back == c) << name;
    EXPECT_EQ(SerializeScenario(back), text) << name;
  }
}

TEST(PresetTest, UnknownPreset) {
  EXPECT_THROW(Preset("nope"), ConfigError);
  EXPECT_EQ(ErrorPath([] { LoadScenario("/nonexistent/file.json"); }),
            "scenario");
}

TEST(PresetTest, LipschitzValues) {
  const ScenarioConfig c = Preset("viA_lipschitz");
  EXPECT_EQ(c.n, 2);
  EXPECT_EQ(c.m, 1);
  EXPECT_EQ(c.loop.steps, 40);
  EXPECT_EQ(c.seeds, 10);
  EXPECT_EQ(c.loop.window_length, 5);
  EXPECT_EQ(c.variation.beta, 0.01);
  EXPECT_EQ(c.r(0, 0), 0.01);
  EXPECT_EQ(c.x0, (Vector(2) << 0.5, 0.5).finished());
  const Qmi prior = c.prior.Build();
  // The box corners of the parameter intervals lie in the prior.
  for (double a : {0.9, 1.3}) {
    for (double b : {0.3, 0.5}) {
      Matrix am = Matrix::Zero(2, 2);
      am(0, 0) = a;
      am(1, 1) = b;
      EXPECT_TRUE(MembershipPrior(am, c.plant.walk.b_column, prior));
    }
  }
  const ScenarioConfig noisy = Preset("viA_lipschitz_noisy");
  ASSERT_TRUE(noisy.noise_g);
  EXPECT_EQ((*noisy.noise_g)(0, 0), 1e4);
  EXPECT_EQ(noisy.loop.mode, LoopMode::kAdaptiveNoisy);
}

TEST(PresetTest, PeriodicValues) {
  const ScenarioConfig c = Preset("viB_periodic");
  EXPECT_EQ(c.n, 3);
  EXPECT_EQ(c.prior.kind, PriorSpec::Kind::kBall);
  EXPECT_EQ(c.prior.radius, 0.22);
  EXPECT_EQ(c.variation.kind, VariationSpec::Kind::kLipschitzModulo);
  EXPECT_EQ(c.variation.period, 12);
  EXPECT_NEAR(c.variation.beta, 11.0 * M_PI / 300.0, 1e-15);
  EXPECT_EQ(c.c_u(0, 0), 2.0);
  const ScenarioConfig noisy = Preset("viB_periodic_noisy");
  EXPECT_EQ(noisy.loop.c, 1e7);
  EXPECT_EQ(noisy.seeds, 10);
}

TEST(PresetTest, WidenedBootstrap) {
  const ScenarioConfig c = Preset("viA_widened_bootstrap");
  EXPECT_EQ(c.loop.mode, LoopMode::kBootstrap);
  EXPECT_EQ(c.loop.excitation_steps, 10);
  EXPECT_EQ(c.plant.walk.b_min, 0.2);
  EXPECT_EQ(c.plant.walk.b_max, 0.6);
}

TEST(ScenarioParseTest, MalformedJson) {
  EXPECT_EQ(ErrorPath([] { ParseScenarioText("{not json"); }), "<root>");
}

TEST(ScenarioParseTest, UnknownFieldIsRejected) {
  const std::string path = ErrorPath([] {
    Edited("viA_lipschitz", [](Json& j) { j["loop"]["stepz"] = 3; });
  });
  EXPECT_NE(path.find("loop"), std::string::npos) << path;
}

TEST(ScenarioParseTest, WrongTypeNamesField) {
  const std::string path = ErrorPath([] {
    Edited("viA_lipschitz", [](Json& j) { j["loop"]["steps"] = "forty"; });
  });
  EXPECT_NE(path.find("loop.steps"), std::string::npos) << path;
}

TEST(ScenarioParseTest, MissingRequiredField) {
  const std::string path = ErrorPath([] {
    Edited("viA_lipschitz", [](Json& j) { j["weights"].erase("q"); });
  });
  EXPECT_NE(path.find("weights.q"), std::string::npos) << path;
}

TEST(ScenarioValidateTest, NonPositiveRadius) {
  ScenarioConfig c = Preset("viB_periodic");
  c.prior.radius = 0.0;
  try {
    ValidateScenario(c);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "prior.radius");
    EXPECT_NE(std::string(e.what()).find("positive"), std::string::npos);
  }
}

TEST(ScenarioValidateTest, ShapeErrorsNameTheField) {
  ScenarioConfig c = Preset("viA_lipschitz");
  c.x0 = Vector::Zero(3);
  EXPECT_EQ(ErrorPath([&] { ValidateScenario(c); }), "x0");
  c = Preset("viB_periodic");
  c.prior.center_b = Matrix::Zero(2, 1);
  EXPECT_EQ(ErrorPath([&] { ValidateScenario(c); }), "prior.center_b");
}

TEST(ScenarioValidateTest, NoisyModeNeedsNoiseBound) {
  ScenarioConfig c = Preset("viA_lipschitz");
  c.loop.mode = LoopMode::kAdaptiveNoisy;
  EXPECT_EQ(ErrorPath([&] { ValidateScenario(c); }), "noise");
}

TEST(ScenarioValidateTest, QmiInvariantViolation) {
  ScenarioConfig c = Preset("viA_lipschitz");
  c.prior.blocks.m22 = Matrix::Identity(3, 3);
  EXPECT_THROW(ValidateScenario(c), QmiInvariantError);
}

TEST(ScenarioValidateTest, BadLoopSettings) {
  ScenarioConfig c = Preset("viA_lipschitz");
  c.loop.steps = 0;
  EXPECT_EQ(ErrorPath([&] { ValidateScenario(c); }), "loop");
  c = Preset("viA_lipschitz");
  c.seeds = 0;
  EXPECT_EQ(ErrorPath([&] { ValidateScenario(c); }), "loop.seeds");
}

TEST(BuildSetupTest, MatchesConfig) {
  const ScenarioConfig c = Preset("viA_lipschitz_noisy");
  const ProblemSetup s = BuildSetup(c);
  EXPECT_EQ(s.x0, c.x0);
  ASSERT_TRUE(s.noise);
  EXPECT_EQ(s.noise->g.matrix(), *c.noise_g);
  EXPECT_EQ(s.weights.q.matrix(), c.q);
  EXPECT_EQ(s.profile.DefaultWindow(), 5);
  EXPECT_EQ(s.prior.m12(), c.prior.blocks.m12);
}

TEST(MakePlantTest, SeedSelectsWalk) {
  const ScenarioConfig c = Preset("viA_lipschitz");
  auto a = MakePlant(c, 1);
  auto b = MakePlant(c, 1);
  auto d = MakePlant(c, 2);
  EXPECT_EQ(a->MatricesAt(10).a, b->MatricesAt(10).a);
  EXPECT_NE(a->MatricesAt(10).a, d->MatricesAt(10).a);
}

}  // namespace
}  // namespace ddmpc
