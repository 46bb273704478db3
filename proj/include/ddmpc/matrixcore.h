#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ddmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Default relative tolerance for definiteness tests.
constexpr double kDefiniteTol = 1e-9;

/// Thrown when a numeric input contains NaN or infinity.
class NumericInputError : public std::invalid_argument {
 public:
  explicit NumericInputError(const std::string& what)
      : std::invalid_argument(what) {}
};

/// Thrown when a Cholesky-type factorization hits a non-positive pivot.
class FactorizationError : public std::runtime_error {
 public:
  FactorizationError(const std::string& what, int pivot_index)
      : std::runtime_error(what), pivot_index_(pivot_index) {}
  int pivot_index() const { return pivot_index_; }

 private:
  int pivot_index_;
};

/// Thrown when a block that must be inverted is (numerically) singular.
class SingularityError : public std::runtime_error {
 public:
  explicit SingularityError(const std::string& what)
      : std::runtime_error(what) {}
};

/// Exact equality that also tolerates differing shapes (returns false).
inline bool SameMatrix(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

/// Dense real symmetric matrix. Symmetry is enforced on construction by
/// averaging with the transpose, so solver output with rounding asymmetry can
/// be wrapped directly.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Eigen::Ref<const Matrix>& m);

  static SymMatrix Identity(int n);
  static SymMatrix Zero(int n);
  static SymMatrix Diagonal(const Vector& d);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

  SymMatrix operator+(const SymMatrix& other) const;
  SymMatrix operator-(const SymMatrix& other) const;
  SymMatrix operator-() const;
  SymMatrix operator*(double s) const;

  bool operator==(const SymMatrix& other) const { return SameMatrix(m_, other.m_); }

 private:
  Matrix m_;
};

inline SymMatrix operator*(double s, const SymMatrix& m) { return m * s; }

struct SpectralBounds {
  double lambda_min{};
  double lambda_max{};
};

/// Throws NumericInputError if any entry of `m` is not finite.
void CheckFinite(const Eigen::Ref<const Matrix>& m, const std::string& what);

/// True iff the smallest eigenvalue exceeds tol * max(1, ||m||_2).
bool IsPositiveDefinite(const SymMatrix& m, double tol = kDefiniteTol);

/// Upper-triangular S with S' S = m.
Matrix SqrtFactor(const SymMatrix& m);

/// m11 - m12 m22^-1 m12' for the partition after `block_split` rows/cols.
SymMatrix SchurComplement(const SymMatrix& m, int block_split);

SpectralBounds GetSpectralBounds(const SymMatrix& m);

/// Inverse of a positive definite matrix via Cholesky.
SymMatrix InvertPd(const SymMatrix& m);

/// Smallest eigenvalue of the symmetric part of a square matrix.
double MinEigenvalue(const Eigen::Ref<const Matrix>& m);

/// Symmetric inverse square root m^{-1/2} of a positive definite matrix.
SymMatrix InverseSqrtPd(const SymMatrix& m);

/// x' m x.
double QuadForm(const SymMatrix& m, const Vector& x);

}  // namespace ddmpc
