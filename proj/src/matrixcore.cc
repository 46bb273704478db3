#include "ddmpc/matrixcore.h"

#include <algorithm>
#include <cmath>

namespace ddmpc {

void CheckFinite(const Eigen::Ref<const Matrix>& m, const std::string& what) {
  if (!m.allFinite()) {
    throw NumericInputError(what + ": matrix has non-finite entries");
  }
}

SymMatrix::SymMatrix(const Eigen::Ref<const Matrix>& m) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument("SymMatrix: matrix must be square, got " +
                                std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()));
  }
  if (m.rows() < 1) {
    throw std::invalid_argument("SymMatrix: dimension must be at least 1");
  }
  m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::Identity(int n) {
  return SymMatrix(Matrix::Identity(n, n));
}

SymMatrix SymMatrix::Zero(int n) { return SymMatrix(Matrix::Zero(n, n)); }

SymMatrix SymMatrix::Diagonal(const Vector& d) {
  return SymMatrix(Matrix(d.asDiagonal()));
}

SymMatrix SymMatrix::operator+(const SymMatrix& other) const {
  return SymMatrix(m_ + other.m_);
}

SymMatrix SymMatrix::operator-(const SymMatrix& other) const {
  return SymMatrix(m_ - other.m_);
}

SymMatrix SymMatrix::operator-() const { return SymMatrix(-m_); }

SymMatrix SymMatrix::operator*(double s) const { return SymMatrix(s * m_); }

namespace {

// Plain Cholesky so that the failing pivot can be reported. Returns the lower
// factor.
Matrix CholeskyLower(const Matrix& a) {
  const int n = static_cast<int>(a.rows());
  Matrix l = Matrix::Zero(n, n);
  const double scale = std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
  for (int j = 0; j < n; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 1e-14 * scale)) {
      throw FactorizationError("Cholesky factorization failed at pivot " +
                                   std::to_string(j) + " (value " +
                                   std::to_string(d) + ")",
                               j);
    }
    l(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i) {
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
    }
  }
  return l;
}

}  // namespace

bool IsPositiveDefinite(const SymMatrix& m, double tol) {
  if (!(tol > 0)) {
    throw std::invalid_argument("IsPositiveDefinite: tol must be positive");
  }
  CheckFinite(m.matrix(), "IsPositiveDefinite");
  const SpectralBounds b = GetSpectralBounds(m);
  const double norm = std::max(std::abs(b.lambda_min), std::abs(b.lambda_max));
  return b.lambda_min > tol * std::max(1.0, norm);
}

Matrix SqrtFactor(const SymMatrix& m) {
  CheckFinite(m.matrix(), "SqrtFactor");
  return CholeskyLower(m.matrix()).transpose();
}

SymMatrix SchurComplement(const SymMatrix& m, int block_split) {
  CheckFinite(m.matrix(), "SchurComplement");
  const int n = m.dim();
  if (block_split < 1 || block_split >= n) {
    throw std::invalid_argument("SchurComplement: block_split out of range");
  }
  const int k = n - block_split;
  const Matrix& a = m.matrix();
  const Matrix m11 = a.topLeftCorner(block_split, block_split);
  const Matrix m12 = a.topRightCorner(block_split, k);
  const Matrix m22 = a.bottomRightCorner(k, k);
  Eigen::JacobiSVD<Matrix> svd(m22, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector sv = svd.singularValues();
  if (sv(k - 1) <= 1e-13 * std::max(1.0, sv(0))) {
    throw SingularityError("SchurComplement: trailing block is singular");
  }
  return SymMatrix(m11 - m12 * svd.solve(m12.transpose()));
}

SpectralBounds GetSpectralBounds(const SymMatrix& m) {
  CheckFinite(m.matrix(), "GetSpectralBounds");
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.matrix(), Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  return {ev(0), ev(ev.size() - 1)};
}

SymMatrix InvertPd(const SymMatrix& m) {
  CheckFinite(m.matrix(), "InvertPd");
  const Matrix l = CholeskyLower(m.matrix());
  const int n = m.dim();
  Matrix linv = l.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
  return SymMatrix(linv.transpose() * linv);
}

double MinEigenvalue(const Eigen::Ref<const Matrix>& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

SymMatrix InverseSqrtPd(const SymMatrix& m) {
  CheckFinite(m.matrix(), "InverseSqrtPd");
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.matrix());
  if (es.eigenvalues()(0) <= 0) {
    throw FactorizationError("InverseSqrtPd: matrix is not positive definite",
                             0);
  }
  const Vector d = es.eigenvalues().cwiseSqrt().cwiseInverse();
  return SymMatrix(es.eigenvectors() * d.asDiagonal() *
                   es.eigenvectors().transpose());
}

double QuadForm(const SymMatrix& m, const Vector& x) {
  return x.dot(m.matrix() * x);
}

}  // namespace ddmpc
