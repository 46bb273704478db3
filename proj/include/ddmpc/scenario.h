#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ddmpc/controlloop.h"
#include "ddmpc/plant.h"
#include "ddmpc/solver.h"
#include "ddmpc/synthesis.h"
#include "ddmpc/uncertainty.h"

namespace ddmpc {

/// Schema or consistency problem in a scenario, tagged with the field path.
class ConfigError : public ParameterError {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : ParameterError(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Raw QMI blocks, validated only when turned into a Qmi.
struct QmiBlocks {
  Matrix m11;
  Matrix m12;
  Matrix m22;

  Qmi Build(const std::string& role) const;
  bool operator==(const QmiBlocks& o) const {
    return m11 == o.m11 && m12 == o.m12 && m22 == o.m22;
  }
};

struct PriorSpec {
  enum class Kind { kBall, kEllipsoid, kExplicit };
  Kind kind{Kind::kBall};
  /// kBall and kEllipsoid.
  Matrix center_a;
  Matrix center_b;
  /// kBall.
  double radius{};
  /// kEllipsoid: (W - W_c)(W - W_c)' <= d.
  Matrix d;
  /// kExplicit.
  QmiBlocks blocks;

  Qmi Build() const;
  bool operator==(const PriorSpec& o) const;
};

struct VariationSpec {
  enum class Kind { kLipschitz, kPeriodic, kLipschitzModulo, kCustom };
  Kind kind{Kind::kLipschitz};
  double beta{};
  int period{1};
  double epsilon{};
  std::optional<QmiBlocks> off_period;
  std::map<int, QmiBlocks> table;

  VariationProfile Build(int n, int m) const;
  bool operator==(const VariationSpec& o) const;
};

struct PlantSpec {
  enum class Kind { kLipschitzWalk, kPeriodic, kSchedule };
  Kind kind{Kind::kLipschitzWalk};
  LipschitzWalkSpec walk;
  /// Fixed initial walk parameters; drawn per seed when unset.
  std::optional<LipschitzWalkParameters> initial;
  std::vector<SystemMatrices> schedule;

  bool operator==(const PlantSpec& o) const;
};

struct ScenarioConfig {
  std::string name;
  int n{};
  int m{};
  int n_c{};
  PriorSpec prior;
  VariationSpec variation;
  /// Noise bound matrix G (w' G w <= 1); required by the noisy modes.
  std::optional<Matrix> noise_g;
  Matrix q;
  Matrix r;
  Matrix c_x;
  Matrix c_u;
  PlantSpec plant;
  Vector x0;
  LoopConfig loop;
  /// Number of seeds in a batch: loop.seed, loop.seed + 1, ...
  int seeds{1};
  SolverOptions solver;

  bool operator==(const ScenarioConfig& o) const;
};

/// Full consistency check; throws ConfigError, ParameterError or
/// QmiInvariantError naming the failing field or assumption.
void ValidateScenario(const ScenarioConfig& config);

Weights BuildWeights(const ScenarioConfig& config);
ProblemSetup BuildSetup(const ScenarioConfig& config);

/// Ground-truth plant for one seed (the walk draws from the plant stream).
std::unique_ptr<PlantModel> MakePlant(const ScenarioConfig& config,
                                      std::uint64_t seed);

struct ComplianceReport {
  bool prior_ok{true};
  bool variation_ok{true};
  std::optional<int> first_failure_time;
  std::string detail;

  bool passed() const { return prior_ok && variation_ok; }
};

/// Checks that the simulated plant satisfies the prior QMI at every time and
/// the variation QMI for every lag within the window, up to `steps`.
ComplianceReport CheckPlantCompliance(const ScenarioConfig& config,
                                      std::uint64_t seed,
                                      double tol = kMembershipTol);

std::vector<std::string> PresetNames();
/// Throws ConfigError for unknown names.
ScenarioConfig Preset(const std::string& name);

ScenarioConfig ParseScenarioText(const std::string& text);
std::string SerializeScenario(const ScenarioConfig& config);

/// Accepts a preset name or a path to a JSON scenario file; validates.
ScenarioConfig LoadScenario(const std::string& name_or_path);

}  // namespace ddmpc
