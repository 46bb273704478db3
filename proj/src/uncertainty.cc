#include "ddmpc/uncertainty.h"

#include <cmath>
#include <utility>

namespace ddmpc {

Qmi::Qmi(SymMatrix m11, Matrix m12, SymMatrix m22, const std::string& role)
    : m11_(std::move(m11)), m12_(std::move(m12)), m22_(std::move(m22)) {
  if (m12_.rows() != m11_.dim() || m12_.cols() != m22_.dim()) {
    throw ParameterError(role + ": block dimensions are inconsistent (m11 " +
                         std::to_string(m11_.dim()) + ", m12 " +
                         std::to_string(m12_.rows()) + "x" +
                         std::to_string(m12_.cols()) + ", m22 " +
                         std::to_string(m22_.dim()) + ")");
  }
  CheckFinite(m11_.matrix(), role + " m11");
  CheckFinite(m12_, role + " m12");
  CheckFinite(m22_.matrix(), role + " m22");
  if (!IsPositiveDefinite(-m22_)) {
    throw QmiInvariantError(role + ": M22 must be negative definite");
  }
  // -m22 is PD, so m22^-1 = -(-m22)^-1.
  const Matrix m22_inv = -(-m22_.matrix()).llt().solve(
      Matrix::Identity(cols(), cols()));
  const SymMatrix schur(m11_.matrix() - m12_ * m22_inv * m12_.transpose());
  if (!IsPositiveDefinite(schur)) {
    throw QmiInvariantError(
        role +
        ": M11 - M12 M22^-1 M12' must be positive definite (the set must "
        "have nonempty interior)");
  }
}

SymMatrix Qmi::Full() const {
  const int p = rows();
  const int q = cols();
  Matrix full(p + q, p + q);
  full << m11_.matrix(), m12_, m12_.transpose(), m22_.matrix();
  return SymMatrix(full);
}

SymMatrix Qmi::Evaluate(const Matrix& x) const {
  if (x.rows() != rows() || x.cols() != cols()) {
    throw ParameterError("Qmi::Evaluate: argument has wrong shape");
  }
  return SymMatrix(m11_.matrix() + m12_ * x.transpose() +
                   x * m12_.transpose() + x * m22_.matrix() * x.transpose());
}

Qmi QmiFromBall(const Matrix& center_a, const Matrix& center_b,
                double radius) {
  if (!(radius > 0)) {
    throw ParameterError("ball prior: radius must be positive");
  }
  const int n = static_cast<int>(center_a.rows());
  return QmiFromEllipsoid(center_a, center_b,
                          SymMatrix::Identity(n) * (radius * radius));
}

Qmi QmiFromEllipsoid(const Matrix& center_a, const Matrix& center_b,
                     const SymMatrix& d) {
  const int n = static_cast<int>(center_a.rows());
  if (center_a.cols() != n || center_b.rows() != n || d.dim() != n) {
    throw ParameterError("prior: center matrices have inconsistent shapes");
  }
  const int m = static_cast<int>(center_b.cols());
  Matrix w(n, n + m);
  w << center_a, center_b;
  return Qmi(SymMatrix(d.matrix() - w * w.transpose()), w,
             SymMatrix::Identity(n + m) * -1.0, "prior QMI");
}

VariationProfile::VariationProfile(Kind kind, int n, int m)
    : kind_(std::move(kind)), n_(n), m_(m) {
  if (n < 1 || m < 1) {
    throw ParameterError("variation profile: dimensions must be positive");
  }
}

VariationProfile VariationProfile::Lipschitz(double beta, int n, int m) {
  if (!(beta >= 0) || !std::isfinite(beta)) {
    throw ParameterError("lipschitz variation: beta must be >= 0");
  }
  return VariationProfile(LipschitzVariation{beta}, n, m);
}

VariationProfile VariationProfile::Periodic(int period, double epsilon,
                                            std::optional<Qmi> off_period,
                                            int n, int m) {
  if (period < 1) throw ParameterError("periodic variation: period must be >= 1");
  if (!(epsilon > 0)) {
    throw ParameterError("periodic variation: epsilon must be > 0");
  }
  if (off_period && (off_period->rows() != n || off_period->cols() != n + m)) {
    throw ParameterError("periodic variation: off-period QMI has wrong shape");
  }
  return VariationProfile(PeriodicVariation{period, epsilon, off_period}, n,
                          m);
}

VariationProfile VariationProfile::LipschitzModulo(double beta, int period,
                                                   double epsilon, int n,
                                                   int m) {
  if (!(beta >= 0)) {
    throw ParameterError("lipschitz_modulo variation: beta must be >= 0");
  }
  if (period < 1) {
    throw ParameterError("lipschitz_modulo variation: period must be >= 1");
  }
  if (!(epsilon > 0)) {
    throw ParameterError("lipschitz_modulo variation: epsilon must be > 0");
  }
  return VariationProfile(LipschitzModuloVariation{beta, period, epsilon}, n,
                          m);
}

VariationProfile VariationProfile::Custom(std::map<int, Qmi> table, int n,
                                          int m) {
  if (table.empty()) throw ParameterError("custom variation: empty table");
  for (const auto& [lag, qmi] : table) {
    if (lag < 1) throw ParameterError("custom variation: lags must be >= 1");
    if (qmi.rows() != n || qmi.cols() != n + m) {
      throw ParameterError("custom variation: QMI at lag " +
                           std::to_string(lag) + " has wrong shape");
    }
  }
  return VariationProfile(CustomVariation{std::move(table)}, n, m);
}

std::optional<int> VariationProfile::DefaultWindow() const {
  if (std::holds_alternative<LipschitzVariation>(kind_)) return 5;
  return std::nullopt;
}

bool VariationProfile::HasInformationAt(int lag) const {
  if (const auto* p = std::get_if<PeriodicVariation>(&kind_)) {
    return lag % p->period == 0 || p->off_period.has_value();
  }
  return true;
}

namespace {

bool SameKind(const LipschitzVariation& a, const LipschitzVariation& b) {
  return a.beta == b.beta;
}
bool SameKind(const PeriodicVariation& a, const PeriodicVariation& b) {
  return a.period == b.period && a.epsilon == b.epsilon &&
         a.off_period == b.off_period;
}
bool SameKind(const LipschitzModuloVariation& a,
              const LipschitzModuloVariation& b) {
  return a.beta == b.beta && a.period == b.period && a.epsilon == b.epsilon;
}
bool SameKind(const CustomVariation& a, const CustomVariation& b) {
  return a.table == b.table;
}

Qmi IsotropicVariation(double radius_sq, int n, int m,
                       const std::string& role) {
  return Qmi(SymMatrix::Identity(n) * radius_sq, Matrix::Zero(n, n + m),
             SymMatrix::Identity(n + m) * -1.0, role);
}

}  // namespace

bool VariationProfile::operator==(const VariationProfile& other) const {
  if (n_ != other.n_ || m_ != other.m_) return false;
  if (kind_.index() != other.kind_.index()) return false;
  return std::visit(
      [&other](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        return SameKind(a, std::get<T>(other.kind_));
      },
      kind_);
}

Qmi VariationQmi(const VariationProfile& profile, int lag) {
  if (lag < 1) throw ParameterError("variation QMI: lag must be >= 1");
  const int n = profile.state_dim();
  const int m = profile.input_dim();
  const std::string role = "variation QMI at lag " + std::to_string(lag);
  const auto& kind = profile.kind();
  if (const auto* p = std::get_if<LipschitzVariation>(&kind)) {
    const double r = p->beta * lag;
    return IsotropicVariation(r * r, n, m, role);
  }
  if (const auto* p = std::get_if<PeriodicVariation>(&kind)) {
    if (lag % p->period == 0) return IsotropicVariation(p->epsilon, n, m, role);
    if (!p->off_period) {
      throw ParameterError(role + ": periodic profile has no off-period bound");
    }
    return *p->off_period;
  }
  if (const auto* p = std::get_if<LipschitzModuloVariation>(&kind)) {
    const int k = lag % p->period;
    if (k == 0) return IsotropicVariation(p->epsilon, n, m, role);
    const double r = p->beta * k;
    return IsotropicVariation(r * r, n, m, role);
  }
  const auto& table = std::get<CustomVariation>(kind).table;
  const auto it = table.find(lag);
  if (it == table.end()) {
    throw ParameterError(role + ": lag not covered by the custom table");
  }
  return it->second;
}

NoiseBound::NoiseBound(SymMatrix g_in) : g(std::move(g_in)) {
  if (!IsPositiveDefinite(g)) {
    throw QmiInvariantError("noise bound: G must be positive definite");
  }
}

DataWindow::DataWindow(std::optional<int> max_length)
    : max_length_(max_length) {
  if (max_length_ && *max_length_ < 1) {
    throw ParameterError("data window: max_length must be >= 1");
  }
}

void DataWindow::Append(const DataPoint& point) {
  if (point.x.size() != point.x_next.size()) {
    throw ParameterError("data window: x and x_next dimensions differ");
  }
  if (!points_.empty()) {
    const DataPoint& last = points_.back();
    if (point.time_index != last.time_index + 1) {
      throw ParameterError("data window: time indices must be contiguous");
    }
    if (point.x.size() != last.x.size() || point.u.size() != last.u.size()) {
      throw ParameterError("data window: inconsistent point dimensions");
    }
  }
  points_.push_back(point);
  if (max_length_ && static_cast<int>(points_.size()) > *max_length_) {
    points_.pop_front();
  }
}

int DataWindow::current_time() const {
  if (points_.empty()) {
    throw ParameterError("data window: empty window has no current time");
  }
  return points_.back().time_index + 1;
}

SymMatrix ComputeNi(const Qmi& m_i, const Vector& x, const Vector& u,
                    double zero_threshold) {
  const int n = static_cast<int>(x.size());
  const int q = m_i.cols();
  if (m_i.rows() != n || q != n + u.size()) {
    throw ParameterError("ComputeNi: QMI shape does not match data");
  }
  Vector z(q);
  z << x, u;
  if (z.norm() <= zero_threshold) {
    throw DegenerateDataError("ComputeNi: data vector is (numerically) zero");
  }
  const Matrix m22_inv = -(-m_i.m22().matrix())
                              .llt()
                              .solve(Matrix::Identity(q, q));
  const Matrix schur =
      m_i.m11().matrix() - m_i.m12() * m22_inv * m_i.m12().transpose();
  const double s = 1.0 / z.dot(m22_inv * z);
  Matrix mid = Matrix::Zero(n + 1, n + 1);
  mid.topLeftCorner(n, n) = schur;
  mid(n, n) = s;
  Matrix t = Matrix::Identity(n + 1, n + 1);
  t.block(n, 0, 1, n) = z.transpose() * m22_inv * m_i.m12().transpose();
  return SymMatrix(t.transpose() * mid * t);
}

Matrix DataBlock(const DataPoint& point) {
  const int n = static_cast<int>(point.x.size());
  const int m = static_cast<int>(point.u.size());
  if (point.x_next.size() != n) {
    throw ParameterError("DataBlock: x and x_next dimensions differ");
  }
  Matrix block = Matrix::Zero(2 * n + m, n + 1);
  block.topLeftCorner(n, n).setIdentity();
  block.block(0, n, n, 1) = point.x_next;
  block.block(n, n, n, 1) = -point.x;
  block.block(2 * n, n, m, 1) = -point.u;
  return block;
}

std::vector<DataTerm> BuildDataTerms(const DataWindow& window,
                                     const VariationProfile& profile,
                                     double zero_threshold) {
  std::vector<DataTerm> terms;
  if (window.empty()) return terms;
  const int t = window.current_time();
  for (const DataPoint& p : window.points()) {
    const int lag = t - p.time_index;
    if (!profile.HasInformationAt(lag)) continue;
    Vector z(p.x.size() + p.u.size());
    z << p.x, p.u;
    if (z.norm() <= zero_threshold) continue;
    const Qmi qmi = VariationQmi(profile, lag);
    terms.push_back(
        {p, lag, ComputeNi(qmi, p.x, p.u, zero_threshold), DataBlock(p)});
  }
  return terms;
}

SymMatrix AssemblePiTau(const std::vector<DataTerm>& terms,
                        const std::vector<double>& taus) {
  if (terms.size() != taus.size()) {
    throw ParameterError("AssemblePiTau: expected " +
                         std::to_string(terms.size()) + " multipliers, got " +
                         std::to_string(taus.size()));
  }
  if (terms.empty()) {
    throw ParameterError("AssemblePiTau: no usable data points");
  }
  const int dim = static_cast<int>(terms.front().block.rows());
  Matrix pi = Matrix::Zero(dim, dim);
  for (size_t i = 0; i < terms.size(); ++i) {
    if (taus[i] < 0) {
      throw ParameterError("AssemblePiTau: multipliers must be nonnegative");
    }
    pi += taus[i] * terms[i].block * terms[i].n_i.matrix() *
          terms[i].block.transpose();
  }
  return SymMatrix(pi);
}

SymMatrix AssemblePiTau(const DataWindow& window,
                        const VariationProfile& profile,
                        const std::vector<double>& taus,
                        double zero_threshold) {
  return AssemblePiTau(BuildDataTerms(window, profile, zero_threshold), taus);
}

namespace {

Matrix IAB(const Matrix& a, const Matrix& b) {
  const int n = static_cast<int>(a.rows());
  Matrix iab(n, n + a.cols() + b.cols());
  iab << Matrix::Identity(n, n), a, b;
  return iab;
}

}  // namespace

bool MembershipPrior(const Matrix& a, const Matrix& b, const Qmi& prior,
                     double tol) {
  const Matrix iab = IAB(a, b);
  if (iab.cols() != prior.rows() + prior.cols()) {
    throw ParameterError("MembershipPrior: dimension mismatch");
  }
  return MinEigenvalue(iab * prior.Full().matrix() * iab.transpose()) >= -tol;
}

bool MembershipConsistency(const Matrix& a, const Matrix& b,
                           const DataPoint& point, const SymMatrix& n_i,
                           double tol) {
  const Matrix iab = IAB(a, b);
  const Matrix block = DataBlock(point);
  if (iab.cols() != block.rows() || n_i.dim() != block.cols()) {
    throw ParameterError("MembershipConsistency: dimension mismatch");
  }
  const Matrix w = iab * block;
  return MinEigenvalue(w * n_i.matrix() * w.transpose()) >= -tol;
}

Matrix NoisyConstraintDescriptor::OCoefficient(const Matrix& o) const {
  return reduction.transpose() * o_embedding * o * o_embedding.transpose() *
         reduction;
}

Matrix NoisyConstraintDescriptor::Lambda1Coefficient() const {
  return -reduction.transpose() * n_embedded * reduction;
}

Matrix NoisyConstraintDescriptor::Lambda2Coefficient() const {
  return -reduction.transpose() * g_embedded * reduction;
}

Matrix NoisyConstraintDescriptor::Evaluate(const Matrix& o, double lambda1,
                                           double lambda2) const {
  return OCoefficient(o) + lambda1 * Lambda1Coefficient() +
         lambda2 * Lambda2Coefficient();
}

NoisyConstraintDescriptor NoisyConstraintBlock(const DataPoint& point,
                                               const SymMatrix& n_i,
                                               const NoiseBound& noise,
                                               NoiseCoupling coupling) {
  const int n = static_cast<int>(point.x.size());
  if (n_i.dim() != n + 1 || noise.g.dim() != n) {
    throw ParameterError("NoisyConstraintBlock: dimension mismatch");
  }
  // Coordinates: [I_n (0..n-1), w_data (n), w_noise (n+1), w_combined (n+2)].
  NoisyConstraintDescriptor d;
  d.n = n;
  d.coupling = coupling;
  d.o_embedding = Matrix::Zero(n + 3, n + 1);
  d.o_embedding.topLeftCorner(n, n).setIdentity();
  d.o_embedding(n + 2, n) = 1.0;

  Matrix e_n = Matrix::Zero(n + 3, n + 1);
  e_n.topLeftCorner(n + 1, n + 1).setIdentity();
  d.n_embedded = e_n * n_i.matrix() * e_n.transpose();

  d.g_embedded = Matrix::Zero(n + 3, n + 3);
  d.g_embedded.topLeftCorner(n, n) = InvertPd(noise.g).matrix();
  d.g_embedded(n + 1, n + 1) = -1.0;

  if (coupling == NoiseCoupling::kIndependent) {
    d.reduction = Matrix::Identity(n + 3, n + 3);
  } else {
    d.reduction = Matrix::Zero(n + 3, n + 2);
    d.reduction.topLeftCorner(n + 2, n + 2).setIdentity();
    d.reduction(n + 2, n) = 1.0;
    d.reduction(n + 2, n + 1) = 1.0;
  }
  return d;
}

Matrix DisturbanceForm(const Matrix& n_i, const Vector& w) {
  const int n = static_cast<int>(w.size());
  Matrix iw(n, n + 1);
  iw << Matrix::Identity(n, n), w;
  return iw * n_i * iw.transpose();
}

}  // namespace ddmpc
