#pragma once

#include <map>
#include <string>
#include <vector>

#include "ddmpc/matrixcore.h"

namespace ddmpc {

/// Matrix-valued affine function of the scalar decision variables of a
/// ConeProgram: constant + sum_i y_i * coefficient_i.
class AffineExpr {
 public:
  AffineExpr() = default;
  AffineExpr(int rows, int cols);

  static AffineExpr Constant(const Matrix& value);
  static AffineExpr Zero(int rows, int cols) { return AffineExpr(rows, cols); }

  /// Assembles a block matrix; each row of blocks must share its row count
  /// and each column of blocks its column count.
  static AffineExpr Blocks(const std::vector<std::vector<AffineExpr>>& rows);

  int rows() const { return static_cast<int>(constant_.rows()); }
  int cols() const { return static_cast<int>(constant_.cols()); }
  const Matrix& constant() const { return constant_; }
  const std::map<int, Matrix>& terms() const { return terms_; }

  void AddTerm(int variable, const Matrix& coefficient);

  AffineExpr& operator+=(const AffineExpr& other);
  AffineExpr& operator-=(const AffineExpr& other);
  AffineExpr operator-() const;
  AffineExpr Transpose() const;

  Matrix Evaluate(const Vector& values) const;

 private:
  Matrix constant_;
  std::map<int, Matrix> terms_;
};

AffineExpr operator+(AffineExpr a, const AffineExpr& b);
AffineExpr operator-(AffineExpr a, const AffineExpr& b);
AffineExpr operator*(double s, const AffineExpr& a);
AffineExpr operator*(const Matrix& lhs, const AffineExpr& a);
AffineExpr operator*(const AffineExpr& a, const Matrix& rhs);
/// Scalar (1x1) expression times a constant matrix.
AffineExpr ScalarTimes(const AffineExpr& scalar, const Matrix& m);

/// Handle to a named block of scalar variables.
struct VariableBlock {
  std::string name;
  int rows{};
  int cols{};
  bool symmetric{};
  /// Scalar variable index per entry, row-major; symmetric blocks share the
  /// index between (i,j) and (j,i).
  std::vector<int> indices;

  int index(int i, int j) const { return indices[i * cols + j]; }
};

struct PsdConstraint {
  std::string label;
  /// Constrained so that expr - margin * I is positive semidefinite.
  AffineExpr expr;
  double margin{};
  bool strict{};
};

struct BlockResidual {
  std::string label;
  /// Smallest eigenvalue of expr (oriented so that >= 0 is feasible).
  double min_eigenvalue{};
  /// Smallest eigenvalue of expr - margin * I.
  double margin_slack{};
};

/// A linear objective over affine PSD constraints on scalar variables.
class ConeProgram {
 public:
  VariableBlock AddVariable(const std::string& name, int rows, int cols,
                            bool symmetric = false);
  VariableBlock AddScalar(const std::string& name) {
    return AddVariable(name, 1, 1);
  }
  /// Scalar variable constrained to be >= 0.
  VariableBlock AddNonnegative(const std::string& name);

  /// Expression for a declared variable block.
  AffineExpr Expr(const VariableBlock& v) const;

  /// expr >= margin * I (strict when margin > 0).
  void AddPsd(const AffineExpr& expr, const std::string& label,
              double margin = 0.0);
  /// expr <= -margin * I.
  void AddNsd(const AffineExpr& expr, const std::string& label,
              double margin = 0.0);

  void Minimize(const AffineExpr& objective);

  int num_variables() const { return static_cast<int>(names_.size()); }
  const std::string& variable_name(int i) const { return names_[i]; }
  const std::vector<PsdConstraint>& constraints() const { return constraints_; }
  const AffineExpr& objective() const { return objective_; }

  Matrix Value(const VariableBlock& v, const Vector& values) const;
  static void Assign(const VariableBlock& v, const Matrix& value,
                     Vector* values);

  double ObjectiveValue(const Vector& values) const;
  std::vector<BlockResidual> Residuals(const Vector& values) const;

 private:
  void CheckExpr(const AffineExpr& expr, const std::string& label) const;

  std::vector<std::string> names_;
  std::vector<PsdConstraint> constraints_;
  AffineExpr objective_{1, 1};
};

}  // namespace ddmpc
