#include <algorithm>
#include <cstdio>
#include <cmath>
#include <limits>
#include <sstream>

#include "ddmpc/solver.h"

namespace ddmpc {

const char* ToString(SolverStatus status) {
  switch (status) {
    case SolverStatus::kOptimal:
      return "optimal";
    case SolverStatus::kInfeasible:
      return "infeasible";
    case SolverStatus::kNumericalFailure:
      return "numerical_failure";
  }
  return "unknown";
}

namespace {

// The program is solved in the standard dual form
//   max b'y  s.t.  Z_k = C_k - sum_i y_i A_ki  is PSD for every block k,
// paired with the primal  min sum_k <C_k, X_k>  s.t.  A(X) = b, X PSD.
// Symmetric matrices are handled through svec (lower triangle, off-diagonal
// entries scaled by sqrt(2)) so that Frobenius inner products become dots.

constexpr double kSqrt2 = 1.4142135623730951;
constexpr int kNoProgressIterations = 15;

Vector Svec(const Matrix& k) {
  const int n = static_cast<int>(k.rows());
  Vector v(n * (n + 1) / 2);
  int idx = 0;
  for (int j = 0; j < n; ++j) {
    v(idx++) = k(j, j);
    for (int i = j + 1; i < n; ++i) v(idx++) = kSqrt2 * 0.5 * (k(i, j) + k(j, i));
  }
  return v;
}

Matrix Smat(const Vector& v, int n) {
  Matrix k(n, n);
  int idx = 0;
  for (int j = 0; j < n; ++j) {
    k(j, j) = v(idx++);
    for (int i = j + 1; i < n; ++i) {
      k(i, j) = k(j, i) = v(idx++) / kSqrt2;
    }
  }
  return k;
}

Matrix Sym(const Matrix& m) { return 0.5 * (m + m.transpose()); }

struct Block {
  int n{};
  Matrix c;
  std::vector<int> vars;
  // svec(A_ki) as columns, one per entry of vars.
  Matrix v;
};

struct SdpData {
  int m{};
  Vector b;
  std::vector<Block> blocks;
};

enum class IpmStatus {
  kConverged,
  kDualInfeasible,
  kUnbounded,
  kMaxIterations,
  kStalled
};

struct IpmResult {
  IpmStatus status{IpmStatus::kStalled};
  Vector y;
  int iterations{};
  double pinf{};
  double dinf{};
  double relgap{};
  std::string detail;
};

Vector ApplyA(const SdpData& d, const std::vector<Matrix>& x) {
  Vector out = Vector::Zero(d.m);
  for (size_t k = 0; k < d.blocks.size(); ++k) {
    const Block& b = d.blocks[k];
    if (b.vars.empty()) continue;
    const Vector contrib = b.v.transpose() * Svec(x[k]);
    for (size_t j = 0; j < b.vars.size(); ++j) out(b.vars[j]) += contrib(j);
  }
  return out;
}

Matrix ApplyAt(const Block& b, const Vector& y) {
  if (b.vars.empty()) return Matrix::Zero(b.n, b.n);
  Vector ys(b.vars.size());
  for (size_t j = 0; j < b.vars.size(); ++j) ys(j) = y(b.vars[j]);
  return Smat(b.v * ys, b.n);
}

double Inner(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double s = 0;
  for (size_t k = 0; k < a.size(); ++k) s += a[k].cwiseProduct(b[k]).sum();
  return s;
}

double FrobNorm(const std::vector<Matrix>& a) {
  double s = 0;
  for (const Matrix& m : a) s += m.squaredNorm();
  return std::sqrt(s);
}

// Largest alpha with x + alpha * dx PSD (infinity if unbounded).
double MaxStep(const Matrix& x, const Matrix& dx) {
  Eigen::LLT<Matrix> llt(x);
  if (llt.info() != Eigen::Success) return 0.0;
  const Matrix l = llt.matrixL();
  Matrix t = l.triangularView<Eigen::Lower>().solve(dx);
  t = l.triangularView<Eigen::Lower>().solve(t.transpose()).transpose();
  const double lam = MinEigenvalue(t);
  if (lam >= 0) return std::numeric_limits<double>::infinity();
  return -1.0 / lam;
}

bool InvertSpd(const Matrix& a, Matrix* inv) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) return false;
  *inv = llt.solve(Matrix::Identity(a.rows(), a.cols()));
  *inv = Sym(*inv);
  return inv->allFinite();
}

IpmResult RunIpm(const SdpData& d, const SolverOptions& opts) {
  IpmResult res;
  const int nb = static_cast<int>(d.blocks.size());
  const double tol = opts.feasibility_tol;
  int total_dim = 0;
  for (const Block& b : d.blocks) total_dim += b.n;

  std::vector<double> a_norm_max(nb, 0.0);
  double c_norm = 0;
  for (int k = 0; k < nb; ++k) {
    const Block& b = d.blocks[k];
    for (int j = 0; j < b.v.cols(); ++j) {
      a_norm_max[k] = std::max(a_norm_max[k], b.v.col(j).norm());
    }
    c_norm += b.c.squaredNorm();
  }
  c_norm = std::sqrt(c_norm);
  const double b_norm = d.b.norm();

  // Infeasible starting point in the style of standard SDP codes.
  std::vector<Matrix> x(nb), z(nb), zinv(nb);
  Vector y = Vector::Zero(d.m);
  for (int k = 0; k < nb; ++k) {
    const Block& b = d.blocks[k];
    double xi = std::max(10.0, std::sqrt(static_cast<double>(b.n)));
    for (size_t j = 0; j < b.vars.size(); ++j) {
      xi = std::max(xi, b.n * (1.0 + std::abs(d.b(b.vars[j]))) /
                            (1.0 + b.v.col(j).norm()));
    }
    double eta = std::max({10.0, std::sqrt(static_cast<double>(b.n)),
                           a_norm_max[k], b.c.norm()});
    x[k] = xi * Matrix::Identity(b.n, b.n);
    z[k] = eta * Matrix::Identity(b.n, b.n);
  }

  double step_p = 0, step_d = 0;
  int stall_count = 0;
  double best_parts[3] = {std::numeric_limits<double>::infinity(),
                          std::numeric_limits<double>::infinity(),
                          std::numeric_limits<double>::infinity()};
  int best_iter = 0;
  // Late iterations can lose accuracy; the best iterate seen is returned
  // when the method stops without converging.
  struct Snapshot {
    double merit;
    Vector y;
    double pinf, dinf, relgap;
  } best{std::numeric_limits<double>::infinity(), y, 0, 0, 0};
  auto restore_best = [&res, &best]() {
    if (best.y.size() == 0 || !std::isfinite(best.merit)) return;
    res.y = best.y;
    res.pinf = best.pinf;
    res.dinf = best.dinf;
    res.relgap = best.relgap;
  };
  std::vector<Matrix> rd(nb), dx(nb), dz(nb), dxp(nb), dzp(nb);

  for (int iter = 0; iter <= opts.max_iterations; ++iter) {
    res.iterations = iter;
    const Vector ax = ApplyA(d, x);
    const Vector rp = d.b - ax;
    for (int k = 0; k < nb; ++k) {
      rd[k] = d.blocks[k].c - ApplyAt(d.blocks[k], y) - z[k];
    }
    std::vector<Matrix> cmat(nb);
    for (int k = 0; k < nb; ++k) cmat[k] = d.blocks[k].c;
    const double pobj = Inner(cmat, x);
    const double dobj = d.b.dot(y);
    const double gap = Inner(x, z);
    const double mu = gap / total_dim;
    res.pinf = rp.norm() / (1.0 + b_norm);
    res.dinf = FrobNorm(rd) / (1.0 + c_norm);
    res.relgap = std::max(gap, std::abs(pobj - dobj)) /
                 (1.0 + std::abs(pobj) + std::abs(dobj));
    res.y = y;
    if (opts.verbosity > 1) {
      std::fprintf(stderr,
                   "ipm %3d pobj %+.6e dobj %+.6e pinf %.2e dinf %.2e gap "
                   "%.2e\n",
                   iter, pobj, dobj, res.pinf, res.dinf, res.relgap);
    }
    if (res.pinf < tol && res.dinf < tol && res.relgap < tol) {
      res.status = IpmStatus::kConverged;
      return res;
    }
    const double merit = std::max({res.pinf, res.dinf, res.relgap});
    if (merit < best.merit) {
      best = {merit, y, res.pinf, res.dinf, res.relgap};
    }
    // Progress in any one residual counts: the gap can grow transiently
    // while the infeasibilities are still being driven down.
    const double parts[3] = {res.pinf, res.dinf, res.relgap};
    bool progress = false;
    for (int i = 0; i < 3; ++i) {
      if (parts[i] < 0.9 * best_parts[i]) {
        best_parts[i] = parts[i];
        progress = true;
      }
    }
    if (progress) {
      best_iter = iter;
    } else if (iter - best_iter >= kNoProgressIterations) {
      res.status = IpmStatus::kStalled;
      res.detail = "no progress in " + std::to_string(kNoProgressIterations) +
                   " iterations";
      restore_best();
      return res;
    }
    // Farkas ray for the LMI: X PSD, A(X) = 0, <C, X> < 0.
    if (pobj < 0 && ax.norm() < 1e-8 * -pobj && res.dinf < 1e-3) {
      res.status = IpmStatus::kDualInfeasible;
      return res;
    }
    if (pobj < 0) {
      std::vector<Matrix> xs(nb);
      for (int k = 0; k < nb; ++k) xs[k] = x[k] / -pobj;
      if (ax.norm() / -pobj < 1e-9 && FrobNorm(xs) < 1e12) {
        res.status = IpmStatus::kDualInfeasible;
        return res;
      }
    }
    if (dobj > 0) {
      double ray = 0;
      for (int k = 0; k < nb; ++k) {
        ray += (ApplyAt(d.blocks[k], y) + z[k]).squaredNorm();
      }
      if (std::sqrt(ray) < 1e-9 * dobj) {
        res.status = IpmStatus::kUnbounded;
        return res;
      }
    }
    if (iter == opts.max_iterations) break;

    // Schur complement matrix M_ij = <A_i, X A_j Z^-1>.
    Matrix schur = Matrix::Zero(d.m, d.m);
    bool ok = true;
    for (int k = 0; k < nb && ok; ++k) {
      ok = InvertSpd(z[k], &zinv[k]);
      const Block& b = d.blocks[k];
      if (!ok || b.vars.empty()) continue;
      const int nv = static_cast<int>(b.vars.size());
      const int sd = static_cast<int>(b.v.rows());
      Matrix w(sd, nv);
      for (int j = 0; j < nv; ++j) {
        const Matrix aj = Smat(b.v.col(j), b.n);
        w.col(j) = Svec(x[k] * aj * zinv[k]);
      }
      const Matrix mk = b.v.transpose() * w;
      for (int i = 0; i < nv; ++i) {
        for (int j = 0; j < nv; ++j) schur(b.vars[i], b.vars[j]) += mk(i, j);
      }
    }
    if (!ok) {
      res.status = IpmStatus::kStalled;
      res.detail = "lost positive definiteness of the dual slack";
      restore_best();
      return res;
    }
    schur = Sym(schur);
    Eigen::LLT<Matrix> chol(schur);
    Eigen::LDLT<Matrix> ldlt;
    bool use_ldlt = false;
    if (chol.info() != Eigen::Success) {
      const double reg = 1e-13 * std::max(1.0, schur.diagonal().maxCoeff());
      chol.compute(schur + reg * Matrix::Identity(d.m, d.m));
      if (chol.info() != Eigen::Success) {
        ldlt.compute(schur);
        use_ldlt = true;
      }
    }
    // Two rounds of iterative refinement keep A(dX) close to the primal
    // residual when the Schur matrix is ill-conditioned.
    auto solve = [&](const Vector& rhs) -> Vector {
      auto base = [&](const Vector& r) {
        return use_ldlt ? Vector(ldlt.solve(r)) : Vector(chol.solve(r));
      };
      Vector sol = base(rhs);
      for (int round = 0; round < 2; ++round) {
        const Vector r = rhs - schur * sol;
        if (!r.allFinite()) break;
        sol += base(r);
      }
      return sol;
    };

    // Predictor.
    std::vector<Matrix> xrdz(nb);
    for (int k = 0; k < nb; ++k) xrdz[k] = Sym(x[k] * rd[k] * zinv[k]);
    const Vector a_xrdz = ApplyA(d, xrdz);
    Vector dy = solve(d.b + a_xrdz);
    double ap = std::numeric_limits<double>::infinity();
    double ad = std::numeric_limits<double>::infinity();
    for (int k = 0; k < nb; ++k) {
      dzp[k] = rd[k] - ApplyAt(d.blocks[k], dy);
      dxp[k] = -x[k] - Sym(x[k] * dzp[k] * zinv[k]);
      ap = std::min(ap, MaxStep(x[k], dxp[k]));
      ad = std::min(ad, MaxStep(z[k], dzp[k]));
    }
    ap = std::min(1.0, ap);
    ad = std::min(1.0, ad);
    double mu_aff = 0;
    for (int k = 0; k < nb; ++k) {
      mu_aff += (x[k] + ap * dxp[k]).cwiseProduct(z[k] + ad * dzp[k]).sum();
    }
    mu_aff /= total_dim;
    const double expon = std::max(1.0, 3.0 * std::pow(std::min(ap, ad), 2));
    const double sigma =
        std::min(1.0, std::pow(std::max(mu_aff, 0.0) / mu, expon));

    // Corrector.
    std::vector<Matrix> corr(nb);
    for (int k = 0; k < nb; ++k) {
      corr[k] = Sym(dxp[k] * dzp[k] * zinv[k]);
    }
    const Vector rhs =
        d.b - sigma * mu * ApplyA(d, zinv) + a_xrdz + ApplyA(d, corr);
    dy = solve(rhs);
    ap = std::numeric_limits<double>::infinity();
    ad = std::numeric_limits<double>::infinity();
    for (int k = 0; k < nb; ++k) {
      dz[k] = rd[k] - ApplyAt(d.blocks[k], dy);
      dx[k] = sigma * mu * zinv[k] - x[k] - Sym(x[k] * dz[k] * zinv[k]) -
              corr[k];
      ap = std::min(ap, MaxStep(x[k], dx[k]));
      ad = std::min(ad, MaxStep(z[k], dz[k]));
    }
    const double damp = 0.9 + 0.09 * std::min(step_p, step_d);
    step_p = std::min(1.0, damp * ap);
    step_d = std::min(1.0, damp * ad);
    if (!dy.allFinite()) {
      res.status = IpmStatus::kStalled;
      res.detail = "non-finite search direction";
      restore_best();
      return res;
    }
    for (int k = 0; k < nb; ++k) {
      x[k] = Sym(x[k] + step_p * dx[k]);
      z[k] = Sym(z[k] + step_d * dz[k]);
    }
    y += step_d * dy;
    if (std::max(step_p, step_d) < 1e-8) {
      if (++stall_count >= 3) {
        res.status = IpmStatus::kStalled;
        res.detail = "step length collapsed";
        restore_best();
        return res;
      }
    } else {
      stall_count = 0;
    }
  }
  res.status = IpmStatus::kMaxIterations;
  res.detail = "iteration limit reached";
  restore_best();
  return res;
}

// Maps the program to dual-form data over the variables that appear in at
// least one constraint. Each block is normalized, and each variable column
// is scaled to unit norm.
struct Compiled {
  SdpData data;
  std::vector<int> active;  // compiled index -> program variable
  Vector col_scale;         // y_program = y_compiled / col_scale
  bool unbounded_unused{false};
};

Compiled Compile(const ConeProgram& program) {
  Compiled out;
  const int nv = program.num_variables();
  std::vector<int> map(nv, -1);
  for (const PsdConstraint& c : program.constraints()) {
    for (const auto& [var, coeff] : c.expr.terms()) {
      if (map[var] < 0 && coeff.cwiseAbs().maxCoeff() > 0) {
        map[var] = static_cast<int>(out.active.size());
        out.active.push_back(var);
      }
    }
  }
  const int m = static_cast<int>(out.active.size());
  Vector cost = Vector::Zero(m);
  for (const auto& [var, coeff] : program.objective().terms()) {
    if (map[var] < 0) {
      if (coeff(0, 0) != 0) out.unbounded_unused = true;
      continue;
    }
    cost(map[var]) += coeff(0, 0);
  }
  out.data.m = m;
  out.data.b = -cost;

  Vector col_sq = Vector::Zero(m);
  for (const PsdConstraint& c : program.constraints()) {
    Block b;
    b.n = c.expr.rows();
    b.c = c.expr.constant() - c.margin * Matrix::Identity(b.n, b.n);
    std::vector<Vector> cols;
    for (const auto& [var, coeff] : c.expr.terms()) {
      if (map[var] < 0) continue;
      b.vars.push_back(map[var]);
      cols.push_back(-Svec(coeff));
    }
    double scale = b.c.norm();
    for (const Vector& col : cols) scale = std::max(scale, col.norm());
    scale = scale > 0 ? 1.0 / scale : 1.0;
    b.c *= scale;
    b.v.resize(b.n * (b.n + 1) / 2, static_cast<int>(cols.size()));
    for (size_t j = 0; j < cols.size(); ++j) {
      b.v.col(j) = scale * cols[j];
      col_sq(b.vars[j]) += b.v.col(j).squaredNorm();
    }
    out.data.blocks.push_back(std::move(b));
  }
  out.col_scale = col_sq.cwiseSqrt();
  for (int i = 0; i < m; ++i) {
    if (!(out.col_scale(i) > 0)) out.col_scale(i) = 1.0;
  }
  for (Block& b : out.data.blocks) {
    for (size_t j = 0; j < b.vars.size(); ++j) {
      b.v.col(j) /= out.col_scale(b.vars[j]);
    }
  }
  out.data.b = out.data.b.cwiseQuotient(out.col_scale);
  const double bn = out.data.b.norm();
  if (bn > 0) out.data.b /= bn;
  return out;
}

Vector Expand(const Compiled& c, const Vector& y, int num_variables) {
  Vector values = Vector::Zero(num_variables);
  for (size_t i = 0; i < c.active.size(); ++i) {
    values(c.active[i]) = y(i) / c.col_scale(i);
  }
  return values;
}

// Feasibility classification: max s subject to every block shifted by s*I
// being PSD, inside a box on the (scaled) variables, with s <= 1.
bool PhaseOneInfeasible(const SdpData& d, const SolverOptions& opts,
                        std::string* detail) {
  const double box = 1e6;
  SdpData p;
  p.m = d.m + 1;
  p.b = Vector::Zero(p.m);
  p.b(d.m) = 1.0;
  const Vector s_col = Svec(Matrix::Identity(1, 1));
  for (const Block& b : d.blocks) {
    Block nb = b;
    nb.vars.push_back(d.m);
    nb.v.conservativeResize(Eigen::NoChange, nb.v.cols() + 1);
    nb.v.col(nb.v.cols() - 1) = Svec(Matrix::Identity(b.n, b.n));
    p.blocks.push_back(std::move(nb));
  }
  for (int i = 0; i <= d.m; ++i) {
    for (double sign : {1.0, -1.0}) {
      if (i == d.m && sign < 0) continue;
      Block bb;
      bb.n = 1;
      bb.c = Matrix::Constant(1, 1, i == d.m ? 1.0 : box);
      bb.vars = {i};
      bb.v = sign * s_col;
      p.blocks.push_back(std::move(bb));
    }
  }
  SolverOptions o = opts;
  o.feasibility_tol = std::max(opts.feasibility_tol, 1e-9);
  const IpmResult r = RunIpm(p, o);
  const double s = r.y.size() == p.m ? r.y(d.m) : 0.0;
  std::ostringstream os;
  os << "phase-I margin " << s << " after " << r.iterations << " iterations";
  *detail = os.str();
  if (r.status == IpmStatus::kConverged || r.status == IpmStatus::kMaxIterations ||
      r.status == IpmStatus::kStalled) {
    return s < -1e-7;
  }
  return r.status == IpmStatus::kDualInfeasible;
}

}  // namespace

SolverOutcome InteriorPointSolver::Solve(const ConeProgram& program,
                                         const SolverOptions& options) const {
  SolverOutcome out;
  if (program.constraints().empty()) {
    out.status = SolverStatus::kNumericalFailure;
    out.detail = "program has no constraints";
    return out;
  }
  const Compiled c = Compile(program);
  if (c.unbounded_unused) {
    out.status = SolverStatus::kNumericalFailure;
    out.detail = "objective depends on an unconstrained variable (unbounded)";
    return out;
  }
  const IpmResult r = RunIpm(c.data, options);
  out.iterations = r.iterations;
  out.primal_infeasibility = r.pinf;
  out.dual_infeasibility = r.dinf;
  out.relative_gap = r.relgap;
  out.values = Expand(c, r.y, program.num_variables());
  switch (r.status) {
    case IpmStatus::kConverged:
      out.status = SolverStatus::kOptimal;
      return out;
    case IpmStatus::kDualInfeasible:
      out.status = SolverStatus::kInfeasible;
      out.detail = "infeasibility certificate found";
      return out;
    case IpmStatus::kUnbounded:
      out.status = SolverStatus::kNumericalFailure;
      out.detail = "problem appears unbounded";
      return out;
    default:
      break;
  }
  // Accept a slightly inaccurate solution if it is feasible for the program.
  // The primal residual only affects the optimality certificate, so it gets
  // the looser bound sqrt(tol).
  const double pinf_tol = std::max(1e3 * options.feasibility_tol,
                                   std::sqrt(options.feasibility_tol));
  if (r.pinf < pinf_tol &&
      r.dinf < 1e3 * options.feasibility_tol &&
      r.relgap < 1e3 * options.feasibility_tol) {
    // A strict inequality may give up a tenth of its margin and still hold
    // strictly; other blocks get a tolerance relative to their magnitude.
    const std::vector<PsdConstraint>& cons = program.constraints();
    const std::vector<BlockResidual> residuals = program.Residuals(out.values);
    bool feasible = true;
    for (size_t i = 0; i < residuals.size(); ++i) {
      const double size =
          cons[i].expr.Evaluate(out.values).cwiseAbs().maxCoeff();
      const double allowed = cons[i].strict ? 0.1 * cons[i].margin
                                            : 1e-9 * std::max(1.0, size);
      if (residuals[i].margin_slack < -allowed) {
        feasible = false;
      }
    }
    if (feasible) {
      out.status = SolverStatus::kOptimal;
      out.detail = "converged to reduced accuracy";
      return out;
    }
  }
  std::string phase_detail;
  if (PhaseOneInfeasible(c.data, options, &phase_detail)) {
    out.status = SolverStatus::kInfeasible;
    out.detail = r.detail + "; " + phase_detail;
  } else {
    out.status = SolverStatus::kNumericalFailure;
    out.detail = r.detail + "; " + phase_detail;
  }
  return out;
}

}  // namespace ddmpc
