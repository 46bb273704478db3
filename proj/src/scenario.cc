#include "ddmpc/scenario.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ddmpc {

using Json = nlohmann::ordered_json;

Qmi QmiBlocks::Build(const std::string& role) const {
  if (m11.rows() != m11.cols() || m22.rows() != m22.cols()) {
    throw ParameterError(role + ": m11 and m22 must be square");
  }
  return Qmi(SymMatrix(m11), m12, SymMatrix(m22), role);
}

bool PriorSpec::operator==(const PriorSpec& o) const {
  return kind == o.kind && SameMatrix(center_a, o.center_a) &&
         SameMatrix(center_b, o.center_b) && radius == o.radius &&
         SameMatrix(d, o.d) && blocks == o.blocks;
}

Qmi PriorSpec::Build() const {
  switch (kind) {
    case Kind::kBall:
      if (!(radius > 0)) {
        throw ConfigError("prior.radius",
                          "prior-knowledge assumption violated: the ball "
                          "radius must be positive");
      }
      return QmiFromBall(center_a, center_b, radius);
    case Kind::kEllipsoid:
      if (d.rows() != d.cols()) {
        throw ConfigError("prior.d", "must be square");
      }
      return QmiFromEllipsoid(center_a, center_b, SymMatrix(d));
    case Kind::kExplicit:
      return blocks.Build("prior QMI");
  }
  throw ConfigError("prior.kind", "unknown prior kind");
}

bool VariationSpec::operator==(const VariationSpec& o) const {
  return kind == o.kind && beta == o.beta && period == o.period &&
         epsilon == o.epsilon && off_period == o.off_period &&
         table == o.table;
}

VariationProfile VariationSpec::Build(int n, int m) const {
  switch (kind) {
    case Kind::kLipschitz:
      return VariationProfile::Lipschitz(beta, n, m);
    case Kind::kPeriodic: {
      std::optional<Qmi> off;
      if (off_period) off = off_period->Build("off-period variation QMI");
      return VariationProfile::Periodic(period, epsilon, off, n, m);
    }
    case Kind::kLipschitzModulo:
      return VariationProfile::LipschitzModulo(beta, period, epsilon, n, m);
    case Kind::kCustom: {
      std::map<int, Qmi> qmis;
      for (const auto& [lag, blocks] : table) {
        qmis.emplace(lag, blocks.Build("variation QMI at lag " +
                                       std::to_string(lag)));
      }
      return VariationProfile::Custom(std::move(qmis), n, m);
    }
  }
  throw ConfigError("variation.kind", "unknown variation kind");
}

bool PlantSpec::operator==(const PlantSpec& o) const {
  if (kind != o.kind || !(walk == o.walk)) return false;
  if (initial.has_value() != o.initial.has_value()) return false;
  if (initial && (initial->a != o.initial->a || initial->b != o.initial->b)) {
    return false;
  }
  if (schedule.size() != o.schedule.size()) return false;
  for (size_t i = 0; i < schedule.size(); ++i) {
    if (!SameMatrix(schedule[i].a, o.schedule[i].a) ||
        !SameMatrix(schedule[i].b, o.schedule[i].b)) {
      return false;
    }
  }
  return true;
}

bool ScenarioConfig::operator==(const ScenarioConfig& o) const {
  const bool noise_eq =
      noise_g.has_value() == o.noise_g.has_value() &&
      (!noise_g || SameMatrix(*noise_g, *o.noise_g));
  return name == o.name && n == o.n && m == o.m && n_c == o.n_c &&
         prior == o.prior && variation == o.variation && noise_eq &&
         SameMatrix(q, o.q) && SameMatrix(r, o.r) && SameMatrix(c_x, o.c_x) &&
         SameMatrix(c_u, o.c_u) && plant == o.plant && SameMatrix(x0, o.x0) &&
         loop == o.loop && seeds == o.seeds &&
         solver.feasibility_tol == o.solver.feasibility_tol &&
         solver.max_iterations == o.solver.max_iterations &&
         solver.eps_strict == o.solver.eps_strict &&
         solver.verbosity == o.solver.verbosity;
}

namespace {

void CheckShape(const Matrix& mat, int rows, int cols,
                const std::string& path) {
  if (mat.rows() != rows || mat.cols() != cols) {
    throw ConfigError(path, "expected " + std::to_string(rows) + "x" +
                                std::to_string(cols) + ", got " +
                                std::to_string(mat.rows()) + "x" +
                                std::to_string(mat.cols()));
  }
  for (int i = 0; i < mat.rows(); ++i) {
    for (int j = 0; j < mat.cols(); ++j) {
      if (!std::isfinite(mat(i, j))) throw ConfigError(path, "non-finite entry");
    }
  }
}

void ValidatePlant(const ScenarioConfig& c) {
  const PlantSpec& p = c.plant;
  switch (p.kind) {
    case PlantSpec::Kind::kLipschitzWalk:
      if (c.n != 2 || c.m != 1) {
        throw ConfigError("plant.kind", "lipschitz_walk needs n = 2, m = 1");
      }
      if (!(p.walk.a_min <= p.walk.a_max) || !(p.walk.b_min <= p.walk.b_max)) {
        throw ConfigError("plant", "empty parameter interval");
      }
      if (!(p.walk.step_size >= 0)) {
        throw ConfigError("plant.step_size", "must be >= 0");
      }
      CheckShape(p.walk.b_column, 2, 1, "plant.b_column");
      if (p.initial &&
          (p.initial->a < p.walk.a_min || p.initial->a > p.walk.a_max ||
           p.initial->b < p.walk.b_min || p.initial->b > p.walk.b_max)) {
        throw ConfigError("plant.initial", "outside the parameter intervals");
      }
      break;
    case PlantSpec::Kind::kPeriodic:
      if (c.n != 3 || c.m != 1) {
        throw ConfigError("plant.kind", "periodic plant needs n = 3, m = 1");
      }
      break;
    case PlantSpec::Kind::kSchedule:
      if (p.schedule.empty()) throw ConfigError("plant.schedule", "empty");
      for (size_t i = 0; i < p.schedule.size(); ++i) {
        const std::string path = "plant.schedule[" + std::to_string(i) + "]";
        CheckShape(p.schedule[i].a, c.n, c.n, path + ".a");
        CheckShape(p.schedule[i].b, c.n, c.m, path + ".b");
      }
      break;
  }
}

}  // namespace

void ValidateScenario(const ScenarioConfig& c) {
  if (c.n < 1) throw ConfigError("dims.n", "must be >= 1");
  if (c.m < 1) throw ConfigError("dims.m", "must be >= 1");
  if (c.n_c < 1) throw ConfigError("dims.n_c", "must be >= 1");
  const int n = c.n, m = c.m;
  switch (c.prior.kind) {
    case PriorSpec::Kind::kBall:
      CheckShape(c.prior.center_a, n, n, "prior.center_a");
      CheckShape(c.prior.center_b, n, m, "prior.center_b");
      break;
    case PriorSpec::Kind::kEllipsoid:
      CheckShape(c.prior.center_a, n, n, "prior.center_a");
      CheckShape(c.prior.center_b, n, m, "prior.center_b");
      CheckShape(c.prior.d, n, n, "prior.d");
      break;
    case PriorSpec::Kind::kExplicit:
      CheckShape(c.prior.blocks.m11, n, n, "prior.m11");
      CheckShape(c.prior.blocks.m12, n, n + m, "prior.m12");
      CheckShape(c.prior.blocks.m22, n + m, n + m, "prior.m22");
      break;
  }
  c.prior.Build();
  if (c.variation.off_period) {
    CheckShape(c.variation.off_period->m11, n, n, "variation.off_period.m11");
    CheckShape(c.variation.off_period->m12, n, n + m,
               "variation.off_period.m12");
    CheckShape(c.variation.off_period->m22, n + m, n + m,
               "variation.off_period.m22");
  }
  for (const auto& [lag, b] : c.variation.table) {
    const std::string path = "variation.table[" + std::to_string(lag) + "]";
    CheckShape(b.m11, n, n, path + ".m11");
    CheckShape(b.m12, n, n + m, path + ".m12");
    CheckShape(b.m22, n + m, n + m, path + ".m22");
  }
  c.variation.Build(n, m);
  if (c.noise_g) {
    CheckShape(*c.noise_g, n, n, "noise.g");
    NoiseBound bound{SymMatrix(*c.noise_g)};
  }
  CheckShape(c.q, n, n, "weights.q");
  CheckShape(c.r, m, m, "weights.r");
  CheckShape(c.c_x, c.n_c, n, "weights.c_x");
  CheckShape(c.c_u, c.n_c, m, "weights.c_u");
  BuildWeights(c).Validate();
  ValidatePlant(c);
  CheckShape(c.x0, n, 1, "x0");
  try {
    c.loop.Validate();
  } catch (const ParameterError& e) {
    throw ConfigError("loop", e.what());
  }
  if (IsNoisyMode(c.loop.mode) && !c.noise_g) {
    throw ConfigError("noise", "noisy modes require a noise bound");
  }
  if (c.seeds < 1) throw ConfigError("loop.seeds", "must be >= 1");
  if (!(c.solver.feasibility_tol > 0)) {
    throw ConfigError("solver.feasibility_tol", "must be positive");
  }
  if (c.solver.max_iterations < 1) {
    throw ConfigError("solver.max_iterations", "must be >= 1");
  }
  if (!(c.solver.eps_strict >= 0)) {
    throw ConfigError("solver.eps_strict", "must be >= 0");
  }
}

Weights BuildWeights(const ScenarioConfig& c) {
  return Weights{SymMatrix(c.q), SymMatrix(c.r), c.c_x, c.c_u};
}

ProblemSetup BuildSetup(const ScenarioConfig& c) {
  std::optional<NoiseBound> noise;
  if (c.noise_g) noise.emplace(SymMatrix(*c.noise_g));
  return ProblemSetup{c.prior.Build(), c.variation.Build(c.n, c.m), noise,
                      BuildWeights(c), c.x0};
}

std::unique_ptr<PlantModel> MakePlant(const ScenarioConfig& c,
                                      std::uint64_t seed) {
  switch (c.plant.kind) {
    case PlantSpec::Kind::kLipschitzWalk: {
      Rng rng = Rng::ForStream(seed, RngStream::kPlantParameters);
      if (c.plant.initial) {
        return std::make_unique<LipschitzRandomWalkPlant>(
            c.plant.walk, *c.plant.initial, std::move(rng));
      }
      return std::make_unique<LipschitzRandomWalkPlant>(c.plant.walk,
                                                        std::move(rng));
    }
    case PlantSpec::Kind::kPeriodic:
      return std::make_unique<PeriodicPlant>();
    case PlantSpec::Kind::kSchedule:
      return std::make_unique<ScheduledPlant>(c.plant.schedule);
  }
  throw ConfigError("plant.kind", "unknown plant kind");
}

ComplianceReport CheckPlantCompliance(const ScenarioConfig& c,
                                      std::uint64_t seed, double tol) {
  const Qmi prior = c.prior.Build();
  const VariationProfile profile = c.variation.Build(c.n, c.m);
  std::unique_ptr<PlantModel> plant = MakePlant(c, seed);
  const int steps = c.loop.steps;
  int max_lag = steps;
  if (c.loop.window_length && *c.loop.window_length > 0) {
    max_lag = *c.loop.window_length;
  } else if (!c.loop.window_length && profile.DefaultWindow()) {
    max_lag = *profile.DefaultWindow();
  }
  std::vector<SystemMatrices> mats;
  for (int t = 0; t <= steps; ++t) mats.push_back(plant->MatricesAt(t));
  ComplianceReport rep;
  auto fail = [&rep](int t, const std::string& what) {
    if (!rep.first_failure_time) {
      rep.first_failure_time = t;
      rep.detail = what;
    }
  };
  for (int t = 0; t <= steps; ++t) {
    if (!MembershipPrior(mats[t].a, mats[t].b, prior, tol)) {
      rep.prior_ok = false;
      fail(t, "true system outside the prior at t = " + std::to_string(t));
    }
    for (int lag = 1; lag <= std::min(max_lag, t); ++lag) {
      if (!profile.HasInformationAt(lag)) continue;
      Matrix delta(c.n, c.n + c.m);
      delta << mats[t].a - mats[t - lag].a, mats[t].b - mats[t - lag].b;
      const Qmi v = VariationQmi(profile, lag);
      if (MinEigenvalue(v.Evaluate(delta).matrix()) < -tol) {
        rep.variation_ok = false;
        fail(t, "variation bound violated at t = " + std::to_string(t) +
                    ", lag " + std::to_string(lag));
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// JSON serialization.

namespace {

/// Typed access to a JSON object that remembers its field path.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(Where(), "expected an object");
  }

  void AllowOnly(std::initializer_list<const char*> keys) const {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!allowed.count(it.key())) {
        throw ConfigError(Child(it.key()), "unknown field");
      }
    }
  }

  bool Has(const std::string& key) const {
    return j_.contains(key) && !j_.at(key).is_null();
  }

  const Json& At(const std::string& key) const {
    if (!Has(key)) throw ConfigError(Child(key), "missing required field");
    return j_.at(key);
  }

  Reader Object(const std::string& key) const {
    return Reader(At(key), Child(key));
  }

  double Number(const std::string& key) const {
    const Json& v = At(key);
    if (!v.is_number()) throw ConfigError(Child(key), "expected a number");
    return v.get<double>();
  }

  double Number(const std::string& key, double fallback) const {
    return Has(key) ? Number(key) : fallback;
  }

  std::int64_t Integer(const std::string& key) const {
    const Json& v = At(key);
    if (!v.is_number_integer()) {
      throw ConfigError(Child(key), "expected an integer");
    }
    return v.get<std::int64_t>();
  }

  std::int64_t Integer(const std::string& key, std::int64_t fallback) const {
    return Has(key) ? Integer(key) : fallback;
  }

  std::uint64_t Unsigned(const std::string& key, std::uint64_t fallback) const {
    if (!Has(key)) return fallback;
    const Json& v = At(key);
    if (!v.is_number_unsigned()) {
      throw ConfigError(Child(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  bool Bool(const std::string& key, bool fallback) const {
    if (!Has(key)) return fallback;
    const Json& v = At(key);
    if (!v.is_boolean()) throw ConfigError(Child(key), "expected a boolean");
    return v.get<bool>();
  }

  std::string String(const std::string& key) const {
    const Json& v = At(key);
    if (!v.is_string()) throw ConfigError(Child(key), "expected a string");
    return v.get<std::string>();
  }

  Matrix Mat(const std::string& key) const { return ToMatrix(At(key), Child(key)); }
  Vector Vec(const std::string& key) const { return ToVector(At(key), Child(key)); }

  static Matrix ToMatrix(const Json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) {
      throw ConfigError(path, "expected a non-empty array of rows");
    }
    const size_t cols = v.at(0).is_array() ? v.at(0).size() : 0;
    if (cols == 0) throw ConfigError(path, "rows must be non-empty arrays");
    Matrix out(v.size(), cols);
    for (size_t i = 0; i < v.size(); ++i) {
      const Json& row = v.at(i);
      const std::string rp = path + "[" + std::to_string(i) + "]";
      if (!row.is_array() || row.size() != cols) {
        throw ConfigError(rp, "expected a row of length " + std::to_string(cols));
      }
      for (size_t k = 0; k < cols; ++k) {
        if (!row.at(k).is_number()) {
          throw ConfigError(rp + "[" + std::to_string(k) + "]",
                            "expected a number");
        }
        out(i, k) = row.at(k).get<double>();
      }
    }
    return out;
  }

  static Vector ToVector(const Json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) {
      throw ConfigError(path, "expected a non-empty array");
    }
    Vector out(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
      if (!v.at(i).is_number()) {
        throw ConfigError(path + "[" + std::to_string(i) + "]",
                          "expected a number");
      }
      out(i) = v.at(i).get<double>();
    }
    return out;
  }

  std::string Child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  const Json& json() const { return j_; }

 private:
  std::string Where() const { return path_.empty() ? "<root>" : path_; }
  const Json& j_;
  std::string path_;
};

Json MatrixJson(const Matrix& mat) {
  Json rows = Json::array();
  for (int i = 0; i < mat.rows(); ++i) {
    Json row = Json::array();
    for (int k = 0; k < mat.cols(); ++k) row.push_back(mat(i, k));
    rows.push_back(row);
  }
  return rows;
}

Json VectorJson(const Vector& v) {
  Json out = Json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Json BlocksJson(const QmiBlocks& b) {
  Json j = Json::object();
  j["m11"] = MatrixJson(b.m11);
  j["m12"] = MatrixJson(b.m12);
  j["m22"] = MatrixJson(b.m22);
  return j;
}

QmiBlocks ReadBlocks(const Reader& r) {
  return QmiBlocks{r.Mat("m11"), r.Mat("m12"), r.Mat("m22")};
}

const char* PriorKindName(PriorSpec::Kind k) {
  switch (k) {
    case PriorSpec::Kind::kBall:
      return "ball";
    case PriorSpec::Kind::kEllipsoid:
      return "ellipsoid";
    case PriorSpec::Kind::kExplicit:
      return "explicit";
  }
  return "";
}

const char* VariationKindName(VariationSpec::Kind k) {
  switch (k) {
    case VariationSpec::Kind::kLipschitz:
      return "lipschitz";
    case VariationSpec::Kind::kPeriodic:
      return "periodic";
    case VariationSpec::Kind::kLipschitzModulo:
      return "lipschitz_modulo";
    case VariationSpec::Kind::kCustom:
      return "custom";
  }
  return "";
}

const char* PlantKindName(PlantSpec::Kind k) {
  switch (k) {
    case PlantSpec::Kind::kLipschitzWalk:
      return "lipschitz_walk";
    case PlantSpec::Kind::kPeriodic:
      return "periodic";
    case PlantSpec::Kind::kSchedule:
      return "schedule";
  }
  return "";
}

PriorSpec ReadPrior(const Reader& r) {
  PriorSpec p;
  const std::string kind = r.String("kind");
  if (kind == "ball") {
    r.AllowOnly({"kind", "center_a", "center_b", "radius"});
    p.kind = PriorSpec::Kind::kBall;
    p.center_a = r.Mat("center_a");
    p.center_b = r.Mat("center_b");
    p.radius = r.Number("radius");
  } else if (kind == "ellipsoid") {
    r.AllowOnly({"kind", "center_a", "center_b", "d"});
    p.kind = PriorSpec::Kind::kEllipsoid;
    p.center_a = r.Mat("center_a");
    p.center_b = r.Mat("center_b");
    p.d = r.Mat("d");
  } else if (kind == "explicit") {
    r.AllowOnly({"kind", "m11", "m12", "m22"});
    p.kind = PriorSpec::Kind::kExplicit;
    p.blocks = ReadBlocks(r);
  } else {
    throw ConfigError(r.Child("kind"),
                      "expected one of ball, ellipsoid, explicit");
  }
  return p;
}

Json PriorJson(const PriorSpec& p) {
  Json j = Json::object();
  j["kind"] = PriorKindName(p.kind);
  switch (p.kind) {
    case PriorSpec::Kind::kBall:
      j["center_a"] = MatrixJson(p.center_a);
      j["center_b"] = MatrixJson(p.center_b);
      j["radius"] = p.radius;
      break;
    case PriorSpec::Kind::kEllipsoid:
      j["center_a"] = MatrixJson(p.center_a);
      j["center_b"] = MatrixJson(p.center_b);
      j["d"] = MatrixJson(p.d);
      break;
    case PriorSpec::Kind::kExplicit:
      j.update(BlocksJson(p.blocks));
      break;
  }
  return j;
}

int ToInt(std::int64_t v, const std::string& path) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError(path, "integer out of range");
  }
  return static_cast<int>(v);
}

VariationSpec ReadVariation(const Reader& r) {
  VariationSpec v;
  const std::string kind = r.String("kind");
  if (kind == "lipschitz") {
    r.AllowOnly({"kind", "beta"});
    v.kind = VariationSpec::Kind::kLipschitz;
    v.beta = r.Number("beta");
  } else if (kind == "periodic") {
    r.AllowOnly({"kind", "period", "epsilon", "off_period"});
    v.kind = VariationSpec::Kind::kPeriodic;
    v.period = ToInt(r.Integer("period"), r.Child("period"));
    v.epsilon = r.Number("epsilon");
    if (r.Has("off_period")) {
      const Reader o = r.Object("off_period");
      o.AllowOnly({"m11", "m12", "m22"});
      v.off_period = ReadBlocks(o);
    }
  } else if (kind == "lipschitz_modulo") {
    r.AllowOnly({"kind", "beta", "period", "epsilon"});
    v.kind = VariationSpec::Kind::kLipschitzModulo;
    v.beta = r.Number("beta");
    v.period = ToInt(r.Integer("period"), r.Child("period"));
    v.epsilon = r.Number("epsilon");
  } else if (kind == "custom") {
    r.AllowOnly({"kind", "table"});
    v.kind = VariationSpec::Kind::kCustom;
    const Json& t = r.At("table");
    if (!t.is_array()) throw ConfigError(r.Child("table"), "expected an array");
    for (size_t i = 0; i < t.size(); ++i) {
      const Reader e(t.at(i), r.Child("table") + "[" + std::to_string(i) + "]");
      e.AllowOnly({"lag", "m11", "m12", "m22"});
      const int lag = ToInt(e.Integer("lag"), e.Child("lag"));
      if (v.table.count(lag)) throw ConfigError(e.Child("lag"), "duplicate lag");
      v.table.emplace(lag, ReadBlocks(e));
    }
  } else {
    throw ConfigError(r.Child("kind"),
                      "expected one of lipschitz, periodic, lipschitz_modulo, "
                      "custom");
  }
  return v;
}

Json VariationJson(const VariationSpec& v) {
  Json j = Json::object();
  j["kind"] = VariationKindName(v.kind);
  switch (v.kind) {
    case VariationSpec::Kind::kLipschitz:
      j["beta"] = v.beta;
      break;
    case VariationSpec::Kind::kPeriodic:
      j["period"] = v.period;
      j["epsilon"] = v.epsilon;
      if (v.off_period) j["off_period"] = BlocksJson(*v.off_period);
      break;
    case VariationSpec::Kind::kLipschitzModulo:
      j["beta"] = v.beta;
      j["period"] = v.period;
      j["epsilon"] = v.epsilon;
      break;
    case VariationSpec::Kind::kCustom: {
      Json t = Json::array();
      for (const auto& [lag, b] : v.table) {
        Json e = Json::object();
        e["lag"] = lag;
        e.update(BlocksJson(b));
        t.push_back(e);
      }
      j["table"] = t;
      break;
    }
  }
  return j;
}

PlantSpec ReadPlant(const Reader& r) {
  PlantSpec p;
  const std::string kind = r.String("kind");
  if (kind == "lipschitz_walk") {
    r.AllowOnly({"kind", "a_min", "a_max", "b_min", "b_max", "step_size",
                 "b_column", "initial"});
    p.kind = PlantSpec::Kind::kLipschitzWalk;
    p.walk.a_min = r.Number("a_min");
    p.walk.a_max = r.Number("a_max");
    p.walk.b_min = r.Number("b_min");
    p.walk.b_max = r.Number("b_max");
    p.walk.step_size = r.Number("step_size");
    p.walk.b_column = r.Vec("b_column");
    if (r.Has("initial")) {
      const Reader i = r.Object("initial");
      i.AllowOnly({"a", "b"});
      p.initial = LipschitzWalkParameters{i.Number("a"), i.Number("b")};
    }
  } else if (kind == "periodic") {
    r.AllowOnly({"kind"});
    p.kind = PlantSpec::Kind::kPeriodic;
  } else if (kind == "schedule") {
    r.AllowOnly({"kind", "schedule"});
    p.kind = PlantSpec::Kind::kSchedule;
    const Json& s = r.At("schedule");
    if (!s.is_array()) {
      throw ConfigError(r.Child("schedule"), "expected an array");
    }
    for (size_t i = 0; i < s.size(); ++i) {
      const Reader e(s.at(i),
                     r.Child("schedule") + "[" + std::to_string(i) + "]");
      e.AllowOnly({"a", "b"});
      p.schedule.push_back({e.Mat("a"), e.Mat("b")});
    }
  } else {
    throw ConfigError(r.Child("kind"),
                      "expected one of lipschitz_walk, periodic, schedule");
  }
  return p;
}

Json PlantJson(const PlantSpec& p) {
  Json j = Json::object();
  j["kind"] = PlantKindName(p.kind);
  switch (p.kind) {
    case PlantSpec::Kind::kLipschitzWalk:
      j["a_min"] = p.walk.a_min;
      j["a_max"] = p.walk.a_max;
      j["b_min"] = p.walk.b_min;
      j["b_max"] = p.walk.b_max;
      j["step_size"] = p.walk.step_size;
      j["b_column"] = VectorJson(p.walk.b_column);
      if (p.initial) j["initial"] = {{"a", p.initial->a}, {"b", p.initial->b}};
      break;
    case PlantSpec::Kind::kPeriodic:
      break;
    case PlantSpec::Kind::kSchedule: {
      Json s = Json::array();
      for (const auto& e : p.schedule) {
        Json o = Json::object();
        o["a"] = MatrixJson(e.a);
        o["b"] = MatrixJson(e.b);
        s.push_back(o);
      }
      j["schedule"] = s;
      break;
    }
  }
  return j;
}

LoopConfig ReadLoop(const Reader& r, int* seeds) {
  r.AllowOnly({"steps", "window_length", "mode", "excitation_steps",
               "input_range", "stop_threshold", "seed", "seeds", "c",
               "zero_noise"});
  LoopConfig l;
  l.steps = ToInt(r.Integer("steps", l.steps), r.Child("steps"));
  if (r.Has("window_length")) {
    l.window_length = ToInt(r.Integer("window_length"), r.Child("window_length"));
  }
  if (r.Has("mode")) {
    try {
      l.mode = ParseLoopMode(r.String("mode"));
    } catch (const ParameterError& e) {
      throw ConfigError(r.Child("mode"), e.what());
    }
  }
  l.excitation_steps =
      ToInt(r.Integer("excitation_steps", l.excitation_steps),
            r.Child("excitation_steps"));
  if (r.Has("input_range")) {
    const Vector range = r.Vec("input_range");
    if (range.size() != 2) {
      throw ConfigError(r.Child("input_range"), "expected [min, max]");
    }
    l.input_min = range(0);
    l.input_max = range(1);
  }
  if (r.Has("stop_threshold")) l.stop_threshold = r.Number("stop_threshold");
  l.seed = r.Unsigned("seed", 0);
  *seeds = ToInt(r.Integer("seeds", 1), r.Child("seeds"));
  if (r.Has("c")) l.c = r.Number("c");
  l.zero_noise = r.Bool("zero_noise", false);
  return l;
}

Json LoopJson(const LoopConfig& l, int seeds) {
  Json j = Json::object();
  j["steps"] = l.steps;
  if (l.window_length) j["window_length"] = *l.window_length;
  j["mode"] = ToString(l.mode);
  j["excitation_steps"] = l.excitation_steps;
  j["input_range"] = {l.input_min, l.input_max};
  if (l.stop_threshold) j["stop_threshold"] = *l.stop_threshold;
  j["seed"] = l.seed;
  j["seeds"] = seeds;
  if (l.c) j["c"] = *l.c;
  j["zero_noise"] = l.zero_noise;
  return j;
}

ScenarioConfig FromJson(const Json& root) {
  const Reader r(root, "");
  r.AllowOnly({"name", "dims", "prior", "variation", "noise", "weights",
               "plant", "x0", "loop", "solver"});
  ScenarioConfig c;
  c.name = r.String("name");
  const Reader dims = r.Object("dims");
  dims.AllowOnly({"n", "m", "n_c"});
  c.n = ToInt(dims.Integer("n"), dims.Child("n"));
  c.m = ToInt(dims.Integer("m"), dims.Child("m"));
  c.n_c = ToInt(dims.Integer("n_c"), dims.Child("n_c"));
  c.prior = ReadPrior(r.Object("prior"));
  c.variation = ReadVariation(r.Object("variation"));
  if (r.Has("noise")) {
    const Reader nz = r.Object("noise");
    nz.AllowOnly({"g"});
    c.noise_g = nz.Mat("g");
  }
  const Reader w = r.Object("weights");
  w.AllowOnly({"q", "r", "c_x", "c_u"});
  c.q = w.Mat("q");
  c.r = w.Mat("r");
  c.c_x = w.Mat("c_x");
  c.c_u = w.Mat("c_u");
  c.plant = ReadPlant(r.Object("plant"));
  c.x0 = r.Vec("x0");
  if (r.Has("loop")) c.loop = ReadLoop(r.Object("loop"), &c.seeds);
  if (r.Has("solver")) {
    const Reader s = r.Object("solver");
    s.AllowOnly({"feasibility_tol", "max_iterations", "eps_strict", "verbosity"});
    c.solver.feasibility_tol =
        s.Number("feasibility_tol", c.solver.feasibility_tol);
    c.solver.max_iterations =
        ToInt(s.Integer("max_iterations", c.solver.max_iterations),
              s.Child("max_iterations"));
    c.solver.eps_strict = s.Number("eps_strict", c.solver.eps_strict);
    c.solver.verbosity = ToInt(s.Integer("verbosity", c.solver.verbosity),
                               s.Child("verbosity"));
  }
  return c;
}

Json ToJson(const ScenarioConfig& c) {
  Json j = Json::object();
  j["name"] = c.name;
  j["dims"] = {{"n", c.n}, {"m", c.m}, {"n_c", c.n_c}};
  j["prior"] = PriorJson(c.prior);
  j["variation"] = VariationJson(c.variation);
  if (c.noise_g) j["noise"] = {{"g", MatrixJson(*c.noise_g)}};
  Json w = Json::object();
  w["q"] = MatrixJson(c.q);
  w["r"] = MatrixJson(c.r);
  w["c_x"] = MatrixJson(c.c_x);
  w["c_u"] = MatrixJson(c.c_u);
  j["weights"] = w;
  j["plant"] = PlantJson(c.plant);
  j["x0"] = VectorJson(c.x0);
  j["loop"] = LoopJson(c.loop, c.seeds);
  Json s = Json::object();
  s["feasibility_tol"] = c.solver.feasibility_tol;
  s["max_iterations"] = c.solver.max_iterations;
  s["eps_strict"] = c.solver.eps_strict;
  s["verbosity"] = c.solver.verbosity;
  j["solver"] = s;
  return j;
}

// ---------------------------------------------------------------------------
// Presets.

Matrix Mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix out(rows.size(), rows.begin()->size());
  int i = 0;
  for (const auto& row : rows) {
    int k = 0;
    for (double v : row) out(i, k++) = v;
    ++i;
  }
  return out;
}

ScenarioConfig LipschitzBase() {
  ScenarioConfig c;
  c.n = 2;
  c.m = 1;
  c.n_c = 1;
  // Ellipsoid around A = diag(1.1, 0.4), B = [0.3; 0.1] with radii 0.2 and
  // 0.1 on the two rows, written out as explicit blocks.
  c.prior.kind = PriorSpec::Kind::kExplicit;
  c.prior.blocks.m11 = Mat({{-1.26, -0.03}, {-0.03, -0.16}});
  c.prior.blocks.m12 = Mat({{1.1, 0.0, 0.3}, {0.0, 0.4, 0.1}});
  c.prior.blocks.m22 = -Matrix::Identity(3, 3);
  c.variation.kind = VariationSpec::Kind::kLipschitz;
  c.variation.beta = 0.01;
  c.q = Matrix::Identity(2, 2);
  c.r = Mat({{0.01}});
  c.c_x = Matrix::Zero(1, 2);
  c.c_u = Mat({{1.0}});
  c.plant.kind = PlantSpec::Kind::kLipschitzWalk;
  c.plant.walk.a_min = 0.9;
  c.plant.walk.a_max = 1.3;
  c.plant.walk.b_min = 0.3;
  c.plant.walk.b_max = 0.5;
  c.plant.walk.step_size = 0.01;
  c.plant.walk.b_column = Vector(2);
  c.plant.walk.b_column << 0.3, 0.1;
  c.x0 = Vector(2);
  c.x0 << 0.5, 0.5;
  c.loop.steps = 40;
  c.loop.window_length = 5;
  c.loop.mode = LoopMode::kAdaptive;
  c.seeds = 10;
  return c;
}

ScenarioConfig PeriodicBase() {
  ScenarioConfig c;
  c.n = 3;
  c.m = 1;
  c.n_c = 1;
  c.prior.kind = PriorSpec::Kind::kBall;
  c.prior.center_a = Mat({{1.1, 0.1, 0.0}, {0.0, 0.7, -0.1}, {0.0, 0.0, 0.5}});
  c.prior.center_b = Mat({{0.6}, {0.1}, {0.1}});
  c.prior.radius = 0.22;
  c.variation.kind = VariationSpec::Kind::kLipschitzModulo;
  c.variation.beta = 11.0 * M_PI / 300.0;
  c.variation.period = 12;
  c.variation.epsilon = 1e-8;
  c.q = Matrix::Identity(3, 3);
  c.r = Matrix::Identity(1, 1);
  c.c_x = Matrix::Zero(1, 3);
  c.c_u = Mat({{2.0}});
  c.plant.kind = PlantSpec::Kind::kPeriodic;
  c.x0 = Vector(3);
  c.x0 << 0.6, 0.6, 0.9;
  c.loop.steps = 40;
  c.loop.window_length = 0;
  c.loop.mode = LoopMode::kAdaptive;
  c.seeds = 1;
  return c;
}

}  // namespace

std::vector<std::string> PresetNames() {
  return {"viA_lipschitz", "viA_lipschitz_noisy", "viA_widened_bootstrap",
          "viB_periodic", "viB_periodic_noisy"};
}

ScenarioConfig Preset(const std::string& name) {
  ScenarioConfig c;
  if (name == "viA_lipschitz") {
    c = LipschitzBase();
  } else if (name == "viA_lipschitz_noisy") {
    c = LipschitzBase();
    c.noise_g = 1e4 * Matrix::Identity(2, 2);
    c.loop.mode = LoopMode::kAdaptiveNoisy;
  } else if (name == "viA_widened_bootstrap") {
    c = LipschitzBase();
    c.plant.walk.b_min = 0.2;
    c.plant.walk.b_max = 0.6;
    c.prior.kind = PriorSpec::Kind::kEllipsoid;
    c.prior.center_a = Mat({{1.1, 0.0}, {0.0, 0.4}});
    c.prior.center_b = Mat({{0.3}, {0.1}});
    c.prior.d = Mat({{0.04, 0.0}, {0.0, 0.04}});
    c.prior.blocks = QmiBlocks{};
    c.loop.mode = LoopMode::kBootstrap;
    c.loop.excitation_steps = 10;
  } else if (name == "viB_periodic") {
    c = PeriodicBase();
  } else if (name == "viB_periodic_noisy") {
    c = PeriodicBase();
    c.noise_g = 1e4 * Matrix::Identity(3, 3);
    c.loop.mode = LoopMode::kAdaptiveNoisy;
    // The doubling search from 2 lambda_max(P) stops short of the smallest
    // feasible constant for this prior (between 1e6 and 3e6).
    c.loop.c = 1e7;
    c.seeds = 10;
  } else {
    throw ConfigError("scenario", "unknown preset '" + name + "'");
  }
  c.name = name;
  return c;
}

ScenarioConfig ParseScenarioText(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  return FromJson(root);
}

std::string SerializeScenario(const ScenarioConfig& config) {
  return ToJson(config).dump(2) + "\n";
}

ScenarioConfig LoadScenario(const std::string& name_or_path) {
  ScenarioConfig c;
  const std::vector<std::string> names = PresetNames();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
    c = Preset(name_or_path);
  } else {
    std::ifstream in(name_or_path);
    if (!in) {
      throw ConfigError("scenario", "'" + name_or_path +
                                        "' is neither a preset nor a "
                                        "readable file");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    c = ParseScenarioText(buf.str());
  }
  ValidateScenario(c);
  return c;
}

}  // namespace ddmpc
