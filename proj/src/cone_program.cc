#include "ddmpc/cone_program.h"

#include <cmath>
#include <stdexcept>

namespace ddmpc {

AffineExpr::AffineExpr(int rows, int cols)
    : constant_(Matrix::Zero(rows, cols)) {}

AffineExpr AffineExpr::Constant(const Matrix& value) {
  AffineExpr e(static_cast<int>(value.rows()), static_cast<int>(value.cols()));
  e.constant_ = value;
  return e;
}

AffineExpr AffineExpr::Blocks(
    const std::vector<std::vector<AffineExpr>>& rows) {
  if (rows.empty() || rows.front().empty()) {
    throw std::invalid_argument("AffineExpr::Blocks: empty block layout");
  }
  const size_t ncols = rows.front().size();
  std::vector<int> col_widths(ncols);
  for (size_t j = 0; j < ncols; ++j) col_widths[j] = rows.front()[j].cols();
  int total_rows = 0;
  for (const auto& row : rows) {
    if (row.size() != ncols) {
      throw std::invalid_argument("AffineExpr::Blocks: ragged block layout");
    }
    for (size_t j = 0; j < ncols; ++j) {
      if (row[j].rows() != row.front().rows() ||
          row[j].cols() != col_widths[j]) {
        throw std::invalid_argument("AffineExpr::Blocks: block size mismatch");
      }
    }
    total_rows += row.front().rows();
  }
  int total_cols = 0;
  for (int w : col_widths) total_cols += w;

  AffineExpr out(total_rows, total_cols);
  int r0 = 0;
  for (const auto& row : rows) {
    int c0 = 0;
    const int h = row.front().rows();
    for (size_t j = 0; j < ncols; ++j) {
      const AffineExpr& b = row[j];
      out.constant_.block(r0, c0, h, col_widths[j]) = b.constant_;
      for (const auto& [var, coeff] : b.terms_) {
        auto it = out.terms_.find(var);
        if (it == out.terms_.end()) {
          it = out.terms_.emplace(var, Matrix::Zero(total_rows, total_cols))
                   .first;
        }
        it->second.block(r0, c0, h, col_widths[j]) += coeff;
      }
      c0 += col_widths[j];
    }
    r0 += h;
  }
  return out;
}

void AffineExpr::AddTerm(int variable, const Matrix& coefficient) {
  if (coefficient.rows() != rows() || coefficient.cols() != cols()) {
    throw std::invalid_argument("AffineExpr::AddTerm: shape mismatch");
  }
  auto it = terms_.find(variable);
  if (it == terms_.end()) {
    terms_.emplace(variable, coefficient);
  } else {
    it->second += coefficient;
  }
}

AffineExpr& AffineExpr::operator+=(const AffineExpr& other) {
  if (other.rows() != rows() || other.cols() != cols()) {
    throw std::invalid_argument("AffineExpr: shape mismatch in sum");
  }
  constant_ += other.constant_;
  for (const auto& [var, coeff] : other.terms_) AddTerm(var, coeff);
  return *this;
}

AffineExpr& AffineExpr::operator-=(const AffineExpr& other) {
  return *this += -other;
}

AffineExpr AffineExpr::operator-() const { return -1.0 * *this; }

AffineExpr AffineExpr::Transpose() const {
  AffineExpr out(cols(), rows());
  out.constant_ = constant_.transpose();
  for (const auto& [var, coeff] : terms_) {
    out.terms_.emplace(var, coeff.transpose());
  }
  return out;
}

Matrix AffineExpr::Evaluate(const Vector& values) const {
  Matrix out = constant_;
  for (const auto& [var, coeff] : terms_) {
    if (var >= values.size()) {
      throw std::invalid_argument("AffineExpr::Evaluate: missing variable");
    }
    out += values(var) * coeff;
  }
  return out;
}

AffineExpr operator+(AffineExpr a, const AffineExpr& b) { return a += b; }
AffineExpr operator-(AffineExpr a, const AffineExpr& b) { return a -= b; }

AffineExpr operator*(double s, const AffineExpr& a) {
  AffineExpr out = AffineExpr::Constant(s * a.constant());
  for (const auto& [var, coeff] : a.terms()) out.AddTerm(var, s * coeff);
  return out;
}

AffineExpr operator*(const Matrix& lhs, const AffineExpr& a) {
  if (lhs.cols() != a.rows()) {
    throw std::invalid_argument("AffineExpr: shape mismatch in product");
  }
  AffineExpr out = AffineExpr::Constant(lhs * a.constant());
  for (const auto& [var, coeff] : a.terms()) out.AddTerm(var, lhs * coeff);
  return out;
}

AffineExpr operator*(const AffineExpr& a, const Matrix& rhs) {
  if (a.cols() != rhs.rows()) {
    throw std::invalid_argument("AffineExpr: shape mismatch in product");
  }
  AffineExpr out = AffineExpr::Constant(a.constant() * rhs);
  for (const auto& [var, coeff] : a.terms()) out.AddTerm(var, coeff * rhs);
  return out;
}

AffineExpr ScalarTimes(const AffineExpr& scalar, const Matrix& m) {
  if (scalar.rows() != 1 || scalar.cols() != 1) {
    throw std::invalid_argument("ScalarTimes: expression is not scalar");
  }
  AffineExpr out = AffineExpr::Constant(scalar.constant()(0, 0) * m);
  for (const auto& [var, coeff] : scalar.terms()) {
    out.AddTerm(var, coeff(0, 0) * m);
  }
  return out;
}

VariableBlock ConeProgram::AddVariable(const std::string& name, int rows,
                                       int cols, bool symmetric) {
  if (rows < 1 || cols < 1) {
    throw std::invalid_argument("ConeProgram: variable '" + name +
                                "' must have positive dimensions");
  }
  if (symmetric && rows != cols) {
    throw std::invalid_argument("ConeProgram: symmetric variable '" + name +
                                "' must be square");
  }
  VariableBlock v{name, rows, cols, symmetric, std::vector<int>(rows * cols)};
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      if (symmetric && j < i) {
        v.indices[i * cols + j] = v.indices[j * cols + i];
        continue;
      }
      v.indices[i * cols + j] = num_variables();
      names_.push_back(rows * cols == 1 ? name
                                        : name + "[" + std::to_string(i) +
                                              "," + std::to_string(j) + "]");
    }
  }
  return v;
}

VariableBlock ConeProgram::AddNonnegative(const std::string& name) {
  VariableBlock v = AddScalar(name);
  AddPsd(Expr(v), name + " >= 0");
  return v;
}

AffineExpr ConeProgram::Expr(const VariableBlock& v) const {
  AffineExpr e(v.rows, v.cols);
  for (int i = 0; i < v.rows; ++i) {
    for (int j = 0; j < v.cols; ++j) {
      Matrix c = Matrix::Zero(v.rows, v.cols);
      c(i, j) = 1.0;
      e.AddTerm(v.index(i, j), c);
    }
  }
  return e;
}

void ConeProgram::CheckExpr(const AffineExpr& expr,
                            const std::string& label) const {
  if (expr.rows() != expr.cols() || expr.rows() < 1) {
    throw std::invalid_argument("ConeProgram: constraint '" + label +
                                "' is not square");
  }
  auto asym = [](const Matrix& m) {
    return (m - m.transpose()).cwiseAbs().maxCoeff() /
           std::max(1.0, m.cwiseAbs().maxCoeff());
  };
  if (asym(expr.constant()) > 1e-10) {
    throw std::invalid_argument("ConeProgram: constraint '" + label +
                                "' is not symmetric");
  }
  for (const auto& [var, coeff] : expr.terms()) {
    if (var < 0 || var >= num_variables()) {
      throw std::invalid_argument("ConeProgram: constraint '" + label +
                                  "' references an undeclared variable");
    }
    if (asym(coeff) > 1e-10) {
      throw std::invalid_argument("ConeProgram: constraint '" + label +
                                  "' is not symmetric in " + names_[var]);
    }
  }
}

void ConeProgram::AddPsd(const AffineExpr& expr, const std::string& label,
                         double margin) {
  CheckExpr(expr, label);
  AffineExpr sym = 0.5 * (expr + expr.Transpose());
  constraints_.push_back({label, std::move(sym), margin, margin > 0});
}

void ConeProgram::AddNsd(const AffineExpr& expr, const std::string& label,
                         double margin) {
  AddPsd(-expr, label, margin);
}

void ConeProgram::Minimize(const AffineExpr& objective) {
  if (objective.rows() != 1 || objective.cols() != 1) {
    throw std::invalid_argument("ConeProgram: objective must be scalar");
  }
  for (const auto& [var, coeff] : objective.terms()) {
    (void)coeff;
    if (var < 0 || var >= num_variables()) {
      throw std::invalid_argument(
          "ConeProgram: objective references an undeclared variable");
    }
  }
  objective_ = objective;
}

Matrix ConeProgram::Value(const VariableBlock& v, const Vector& values) const {
  Matrix out(v.rows, v.cols);
  for (int i = 0; i < v.rows; ++i) {
    for (int j = 0; j < v.cols; ++j) out(i, j) = values(v.index(i, j));
  }
  return out;
}

void ConeProgram::Assign(const VariableBlock& v, const Matrix& value,
                         Vector* values) {
  if (value.rows() != v.rows || value.cols() != v.cols) {
    throw std::invalid_argument("ConeProgram::Assign: shape mismatch for " +
                                v.name);
  }
  for (int i = 0; i < v.rows; ++i) {
    for (int j = 0; j < v.cols; ++j) {
      if (v.symmetric && j < i) continue;
      (*values)(v.index(i, j)) =
          v.symmetric ? 0.5 * (value(i, j) + value(j, i)) : value(i, j);
    }
  }
}

double ConeProgram::ObjectiveValue(const Vector& values) const {
  return objective_.Evaluate(values)(0, 0);
}

std::vector<BlockResidual> ConeProgram::Residuals(const Vector& values) const {
  std::vector<BlockResidual> out;
  out.reserve(constraints_.size());
  for (const PsdConstraint& c : constraints_) {
    const double lam = MinEigenvalue(c.expr.Evaluate(values));
    out.push_back({c.label, lam, lam - c.margin});
  }
  return out;
}

}  // namespace ddmpc
