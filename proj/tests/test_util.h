#pragma once

#include <algorithm>
#include <cstdint>

#include "ddmpc/matrixcore.h"
#include "ddmpc/rng.h"

namespace ddmpc {
namespace testing {

inline Matrix RandomMatrix(Rng& rng, int rows, int cols, double lo = -1.0,
                           double hi = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.Uniform(lo, hi);
  }
  return m;
}

inline Vector RandomVector(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
  return RandomMatrix(rng, n, 1, lo, hi);
}

/// A random positive definite matrix with eigenvalues in roughly
/// [min_eig, min_eig + n].
inline SymMatrix RandomPd(Rng& rng, int n, double min_eig = 0.1) {
  const Matrix a = RandomMatrix(rng, n, n);
  return SymMatrix(a * a.transpose() + min_eig * Matrix::Identity(n, n));
}

inline double RelFrobError(const Matrix& actual, const Matrix& expected) {
  return (actual - expected).norm() / std::max(1.0, expected.norm());
}

}  // namespace testing
}  // namespace ddmpc
