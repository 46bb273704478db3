#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "ddmpc/matrixcore.h"
#include "ddmpc/rng.h"
#include "ddmpc/uncertainty.h"

namespace ddmpc {

struct SystemMatrices {
  Matrix a;
  Matrix b;
};

/// Ground-truth LTV system x_{t+1} = A_t x_t + B_t u_t + w_t. Controller code
/// only sees the plant through Step(); MatricesAt() exists for verification.
class PlantModel {
 public:
  virtual ~PlantModel() = default;
  virtual int state_dim() const = 0;
  virtual int input_dim() const = 0;
  /// Non-const because some plants extend a lazily drawn schedule.
  virtual SystemMatrices MatricesAt(int t) = 0;

  Vector Step(int t, const Vector& x, const Vector& u,
              const Vector* noise = nullptr);
};

/// Interval bounds and rate for the diagonal random-walk parameters.
struct LipschitzWalkSpec {
  double a_min{0.9};
  double a_max{1.3};
  double b_min{0.3};
  double b_max{0.5};
  double step_size{0.01};
  Vector b_column;

  bool operator==(const LipschitzWalkSpec& o) const {
    return a_min == o.a_min && a_max == o.a_max && b_min == o.b_min &&
           b_max == o.b_max && step_size == o.step_size &&
           SameMatrix(b_column, o.b_column);
  }
};

struct LipschitzWalkParameters {
  double a{};
  double b{};
};

/// Independent uniform increments in [-step, step], clipped into the bounds.
LipschitzWalkParameters AdvanceParameters(const LipschitzWalkParameters& p,
                                          const LipschitzWalkSpec& spec,
                                          Rng& rng);

/// x_{t+1} = diag(a_t, b_t) x_t + b_column u_t with a random-walk schedule.
class LipschitzRandomWalkPlant : public PlantModel {
 public:
  /// Initial parameters drawn uniformly inside the bounds from `rng`.
  LipschitzRandomWalkPlant(LipschitzWalkSpec spec, Rng rng);
  /// Fixed initial parameters.
  LipschitzRandomWalkPlant(LipschitzWalkSpec spec,
                           LipschitzWalkParameters initial, Rng rng);

  int state_dim() const override { return 2; }
  int input_dim() const override { return 1; }
  SystemMatrices MatricesAt(int t) override;
  LipschitzWalkParameters ParametersAt(int t);

 private:
  LipschitzWalkSpec spec_;
  Rng rng_;
  std::vector<LipschitzWalkParameters> history_;
};

/// The 3-state system with sinusoidal diagonal entries of period 12.
class PeriodicPlant : public PlantModel {
 public:
  int state_dim() const override { return 3; }
  int input_dim() const override { return 1; }
  SystemMatrices MatricesAt(int t) override;
};

/// Explicit list of (A_t, B_t), repeated cyclically.
class ScheduledPlant : public PlantModel {
 public:
  explicit ScheduledPlant(std::vector<SystemMatrices> schedule);
  int state_dim() const override;
  int input_dim() const override;
  SystemMatrices MatricesAt(int t) override;

 private:
  std::vector<SystemMatrices> schedule_;
};

/// Uniform samples on the ellipsoid {w : w' G w <= 1}.
class NoiseGenerator {
 public:
  NoiseGenerator(NoiseBound bound, Rng rng);
  Vector Sample();
  const NoiseBound& bound() const { return bound_; }

 private:
  NoiseBound bound_;
  SymMatrix g_inv_sqrt_;
  Rng rng_;
};

}  // namespace ddmpc
