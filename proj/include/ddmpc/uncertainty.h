#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ddmpc/matrixcore.h"

namespace ddmpc {

/// Invalid scalar or dimensional parameter.
class ParameterError : public std::invalid_argument {
 public:
  explicit ParameterError(const std::string& what)
      : std::invalid_argument(what) {}
};

/// A QMI descriptor violates its well-posedness conditions.
class QmiInvariantError : public std::invalid_argument {
 public:
  explicit QmiInvariantError(const std::string& what)
      : std::invalid_argument(what) {}
};

/// A data point too close to the origin to carry information.
class DegenerateDataError : public std::runtime_error {
 public:
  explicit DegenerateDataError(const std::string& what)
      : std::runtime_error(what) {}
};

/// The set {X : [I X] M [I X]' >= 0} with M = [m11 m12; m12' m22].
/// Construction checks m22 < 0 and m11 - m12 m22^-1 m12' > 0.
class Qmi {
 public:
  Qmi(SymMatrix m11, Matrix m12, SymMatrix m22,
      const std::string& role = "QMI");

  const SymMatrix& m11() const { return m11_; }
  const Matrix& m12() const { return m12_; }
  const SymMatrix& m22() const { return m22_; }
  int rows() const { return m11_.dim(); }
  int cols() const { return m22_.dim(); }

  /// The full (p+q)x(p+q) matrix M.
  SymMatrix Full() const;

  /// [I X] M [I X]' for an explicit X (p x q).
  SymMatrix Evaluate(const Matrix& x) const;

  bool operator==(const Qmi& other) const {
    return m11_ == other.m11_ && SameMatrix(m12_, other.m12_) &&
           m22_ == other.m22_;
  }

 private:
  SymMatrix m11_;
  Matrix m12_;
  SymMatrix m22_;
};

/// The ball {(A,B) : ||[A - a_bar, B - b_bar]|| <= radius}.
Qmi QmiFromBall(const Matrix& center_a, const Matrix& center_b, double radius);

/// Ellipsoid {W : (W - W_c)(W - W_c)' <= d} around W_c = [center_a center_b].
Qmi QmiFromEllipsoid(const Matrix& center_a, const Matrix& center_b,
                     const SymMatrix& d);

struct LipschitzVariation {
  double beta{};
};
struct PeriodicVariation {
  int period{};
  double epsilon{};
  /// Applied to lags that are not a multiple of the period.
  std::optional<Qmi> off_period;
};
struct LipschitzModuloVariation {
  double beta{};
  int period{};
  double epsilon{};
};
struct CustomVariation {
  std::map<int, Qmi> table;
};

/// Bound on the variation of [A_t B_t] between time t and t - lag.
class VariationProfile {
 public:
  using Kind = std::variant<LipschitzVariation, PeriodicVariation,
                            LipschitzModuloVariation, CustomVariation>;

  static VariationProfile Lipschitz(double beta, int n, int m);
  static VariationProfile Periodic(int period, double epsilon,
                                   std::optional<Qmi> off_period, int n,
                                   int m);
  static VariationProfile LipschitzModulo(double beta, int period,
                                          double epsilon, int n, int m);
  static VariationProfile Custom(std::map<int, Qmi> table, int n, int m);

  const Kind& kind() const { return kind_; }
  int state_dim() const { return n_; }
  int input_dim() const { return m_; }

  /// Default truncation length: 5 for Lipschitz-type, unbounded otherwise.
  std::optional<int> DefaultWindow() const;

  /// False only for periodic profiles without off-period information.
  bool HasInformationAt(int lag) const;

  bool operator==(const VariationProfile& other) const;

 private:
  VariationProfile(Kind kind, int n, int m);
  Kind kind_;
  int n_{};
  int m_{};
};

Qmi VariationQmi(const VariationProfile& profile, int lag);

struct NoiseBound {
  explicit NoiseBound(SymMatrix g);
  SymMatrix g;
};

struct DataPoint {
  Vector x;
  Vector u;
  Vector x_next;
  int time_index{};
};

/// Contiguous sliding window of data points, oldest first.
class DataWindow {
 public:
  explicit DataWindow(std::optional<int> max_length = std::nullopt);

  /// Appends a point; the oldest point is dropped when the window is full.
  void Append(const DataPoint& point);

  const std::deque<DataPoint>& points() const { return points_; }
  std::optional<int> max_length() const { return max_length_; }
  bool empty() const { return points_.empty(); }
  int size() const { return static_cast<int>(points_.size()); }

  /// Time index following the newest point (the "current" time).
  int current_time() const;

 private:
  std::deque<DataPoint> points_;
  std::optional<int> max_length_;
};

SymMatrix ComputeNi(const Qmi& m_i, const Vector& x, const Vector& u,
                    double zero_threshold = 1e-8);

/// The (2n+m)x(n+1) stack [[I, x_next], [0, -x], [0, -u]].
Matrix DataBlock(const DataPoint& point);

/// A usable window entry together with its lag and data matrices.
struct DataTerm {
  DataPoint point;
  int lag{};
  SymMatrix n_i;
  Matrix block;
};

/// Builds one term per non-degenerate point that carries information.
std::vector<DataTerm> BuildDataTerms(const DataWindow& window,
                                     const VariationProfile& profile,
                                     double zero_threshold);

SymMatrix AssemblePiTau(const std::vector<DataTerm>& terms,
                        const std::vector<double>& taus);

/// Convenience overload computing the terms from the window.
SymMatrix AssemblePiTau(const DataWindow& window,
                        const VariationProfile& profile,
                        const std::vector<double>& taus,
                        double zero_threshold = 1e-8);

constexpr double kMembershipTol = 1e-7;

bool MembershipPrior(const Matrix& a, const Matrix& b, const Qmi& prior,
                     double tol = kMembershipTol);

bool MembershipConsistency(const Matrix& a, const Matrix& b,
                           const DataPoint& point, const SymMatrix& n_i,
                           double tol = kMembershipTol);

/// How the disturbance coordinates of the noisy coupling block are related.
enum class NoiseCoupling {
  /// The combined disturbance equals data part plus noise part; the block is
  /// reduced by the corresponding congruence before imposing PSD.
  kSubstituted,
  /// All four coordinates treated as independent.
  kIndependent,
};

/// Linear matrix function
///   S(O, l1, l2) = R' (E O E' - l1 * En N En' - l2 * Gm) R
/// in the coordinates (I_n, w_data, w_noise, w_combined), where R is the
/// identity or the substitution map w_combined = w_data + w_noise.
struct NoisyConstraintDescriptor {
  int n{};
  NoiseCoupling coupling{NoiseCoupling::kSubstituted};
  /// (n+3)x(n+1) embedding of O into the full coordinates.
  Matrix o_embedding;
  /// Full-coordinate coefficient of l1 (positive sign convention).
  Matrix n_embedded;
  /// Full-coordinate coefficient of l2 (positive sign convention).
  Matrix g_embedded;
  /// Reduction map R; identity for independent coupling.
  Matrix reduction;

  int dim() const { return static_cast<int>(reduction.cols()); }
  /// Coefficient of O: maps an (n+1)x(n+1) matrix to dim() x dim().
  Matrix OCoefficient(const Matrix& o) const;
  Matrix Lambda1Coefficient() const;
  Matrix Lambda2Coefficient() const;
  Matrix Evaluate(const Matrix& o, double lambda1, double lambda2) const;
};

NoisyConstraintDescriptor NoisyConstraintBlock(
    const DataPoint& point, const SymMatrix& n_i, const NoiseBound& noise,
    NoiseCoupling coupling = NoiseCoupling::kSubstituted);

/// Value of [I w] N [I w]' for a vector disturbance w (n x n result).
Matrix DisturbanceForm(const Matrix& n_i, const Vector& w);

}  // namespace ddmpc
