#include "ddmpc/plant.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ddmpc {

Vector PlantModel::Step(int t, const Vector& x, const Vector& u,
                        const Vector* noise) {
  if (x.size() != state_dim() || u.size() != input_dim()) {
    throw std::invalid_argument("plant step: dimension mismatch");
  }
  const SystemMatrices s = MatricesAt(t);
  Vector next = s.a * x + s.b * u;
  if (noise) {
    if (noise->size() != state_dim()) {
      throw std::invalid_argument("plant step: noise dimension mismatch");
    }
    next += *noise;
  }
  return next;
}

LipschitzWalkParameters AdvanceParameters(const LipschitzWalkParameters& p,
                                          const LipschitzWalkSpec& spec,
                                          Rng& rng) {
  LipschitzWalkParameters next;
  const double da = rng.Uniform(-spec.step_size, spec.step_size);
  const double db = rng.Uniform(-spec.step_size, spec.step_size);
  next.a = std::clamp(p.a + da, spec.a_min, spec.a_max);
  next.b = std::clamp(p.b + db, spec.b_min, spec.b_max);
  return next;
}

namespace {

void ValidateWalk(const LipschitzWalkSpec& spec) {
  if (!(spec.a_min <= spec.a_max) || !(spec.b_min <= spec.b_max)) {
    throw std::invalid_argument("random-walk plant: empty parameter interval");
  }
  if (!(spec.step_size >= 0)) {
    throw std::invalid_argument("random-walk plant: step size must be >= 0");
  }
  if (spec.b_column.size() != 2) {
    throw std::invalid_argument("random-walk plant: b_column must have 2 rows");
  }
}

}  // namespace

LipschitzRandomWalkPlant::LipschitzRandomWalkPlant(LipschitzWalkSpec spec,
                                                   Rng rng)
    : spec_(std::move(spec)), rng_(std::move(rng)) {
  ValidateWalk(spec_);
  LipschitzWalkParameters p;
  p.a = rng_.Uniform(spec_.a_min, spec_.a_max);
  p.b = rng_.Uniform(spec_.b_min, spec_.b_max);
  history_.push_back(p);
}

LipschitzRandomWalkPlant::LipschitzRandomWalkPlant(
    LipschitzWalkSpec spec, LipschitzWalkParameters initial, Rng rng)
    : spec_(std::move(spec)), rng_(std::move(rng)) {
  ValidateWalk(spec_);
  history_.push_back(initial);
}

LipschitzWalkParameters LipschitzRandomWalkPlant::ParametersAt(int t) {
  if (t < 0) throw std::invalid_argument("random-walk plant: negative time");
  while (static_cast<int>(history_.size()) <= t) {
    history_.push_back(AdvanceParameters(history_.back(), spec_, rng_));
  }
  return history_[t];
}

SystemMatrices LipschitzRandomWalkPlant::MatricesAt(int t) {
  const LipschitzWalkParameters p = ParametersAt(t);
  SystemMatrices s;
  s.a = Matrix::Zero(2, 2);
  s.a(0, 0) = p.a;
  s.a(1, 1) = p.b;
  s.b = spec_.b_column;
  return s;
}

SystemMatrices PeriodicPlant::MatricesAt(int t) {
  const double ph = M_PI / 6.0 * static_cast<double>(t % 12);
  const double s = std::sin(ph);
  const double c = std::cos(ph);
  SystemMatrices m;
  m.a.resize(3, 3);
  m.a << 1.1 + 0.2 * s, 0.1, 0.0,  //
      0.0, 0.7 + 0.15 * s, -0.1,   //
      0.0, 0.0, 0.5 + 0.22 * c;
  m.b.resize(3, 1);
  m.b << 0.6, 0.1, 0.1;
  return m;
}

ScheduledPlant::ScheduledPlant(std::vector<SystemMatrices> schedule)
    : schedule_(std::move(schedule)) {
  if (schedule_.empty()) {
    throw std::invalid_argument("scheduled plant: empty schedule");
  }
  const auto& f = schedule_.front();
  for (const auto& s : schedule_) {
    if (s.a.rows() != f.a.rows() || s.a.cols() != f.a.rows() ||
        s.b.rows() != f.a.rows() || s.b.cols() != f.b.cols()) {
      throw std::invalid_argument("scheduled plant: inconsistent shapes");
    }
  }
}

int ScheduledPlant::state_dim() const {
  return static_cast<int>(schedule_.front().a.rows());
}

int ScheduledPlant::input_dim() const {
  return static_cast<int>(schedule_.front().b.cols());
}

SystemMatrices ScheduledPlant::MatricesAt(int t) {
  if (t < 0) throw std::invalid_argument("scheduled plant: negative time");
  return schedule_[t % schedule_.size()];
}

NoiseGenerator::NoiseGenerator(NoiseBound bound, Rng rng)
    : bound_(std::move(bound)),
      g_inv_sqrt_(InverseSqrtPd(bound_.g)),
      rng_(std::move(rng)) {}

Vector NoiseGenerator::Sample() {
  const int n = bound_.g.dim();
  Vector d(n);
  double norm = 0;
  while (!(norm > 1e-300)) {
    for (int i = 0; i < n; ++i) d(i) = rng_.Normal();
    norm = d.norm();
  }
  const double r = std::pow(rng_.Uniform(), 1.0 / n);
  return g_inv_sqrt_.matrix() * (d * (r / norm));
}

}  // namespace ddmpc
