#include "ddmpc/synthesis.h"

#include <chrono>
#include <cmath>
#include <limits>

namespace ddmpc {

void Weights::Validate() const {
  if (!IsPositiveDefinite(q)) throw ParameterError("weights: Q must be PD");
  if (!IsPositiveDefinite(r)) throw ParameterError("weights: R must be PD");
  if (c_x.cols() != q.dim() || c_u.cols() != r.dim() ||
      c_x.rows() != c_u.rows() || c_x.rows() < 1) {
    throw ParameterError("weights: constraint matrices have inconsistent shape");
  }
  CheckFinite(c_x, "weights c_x");
  CheckFinite(c_u, "weights c_u");
}

double Weights::StageCost(const Vector& u, const Vector& x) const {
  return QuadForm(r, u) + QuadForm(q, x);
}

double Weights::ConstraintValue(const Vector& x, const Vector& u) const {
  return (c_x * x + c_u * u).norm();
}

TerminalCost::TerminalCost(const SymMatrix& p_in)
    : p(p_in), p_inv(InvertPd(p_in)) {}

const char* ToString(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::kInitial:
      return "initial";
    case ProblemKind::kAdaptive:
      return "adaptive";
    case ProblemKind::kInitialNoisy:
      return "initial_noisy";
    case ProblemKind::kAdaptiveNoisy:
      return "adaptive_noisy";
    case ProblemKind::kBootstrap:
      return "bootstrap";
  }
  return "unknown";
}

const ConicSolver& SynthesisContext::GetSolver() const {
  static const InteriorPointSolver kDefault;
  return solver ? *solver : kDefault;
}

namespace {

bool IsNoisy(ProblemKind k) {
  return k == ProblemKind::kInitialNoisy || k == ProblemKind::kAdaptiveNoisy;
}

bool UsesTerminal(ProblemKind k) {
  return k == ProblemKind::kAdaptive || k == ProblemKind::kAdaptiveNoisy;
}

bool UsesData(ProblemKind k) {
  return k == ProblemKind::kAdaptive || k == ProblemKind::kAdaptiveNoisy ||
         k == ProblemKind::kBootstrap;
}

AffineExpr Zeros(int r, int c) { return AffineExpr::Zero(r, c); }

}  // namespace

BuiltProgram BuildProgram(const ProblemSpec& spec) {
  if (!spec.prior || !spec.weights) {
    throw ParameterError("BuildProgram: prior and weights are required");
  }
  const Weights& w = *spec.weights;
  const int n = w.state_dim();
  const int m = w.input_dim();
  const int nc = static_cast<int>(w.c_x.rows());
  if (spec.x.size() != n) throw ParameterError("BuildProgram: state dimension");
  if (spec.prior->rows() != n || spec.prior->cols() != n + m) {
    throw ParameterError("BuildProgram: prior QMI shape does not match weights");
  }
  if (UsesTerminal(spec.kind) && !spec.terminal) {
    throw ParameterError("BuildProgram: terminal cost required");
  }
  if (IsNoisy(spec.kind) && !(spec.c > 0)) {
    throw ParameterError("BuildProgram: noise constant c must be positive");
  }
  if (spec.kind == ProblemKind::kAdaptiveNoisy && !spec.noise) {
    throw ParameterError("BuildProgram: noise bound required");
  }

  BuiltProgram b;
  b.kind = spec.kind;
  b.n = n;
  b.m = m;
  const double xnorm = spec.x.norm();
  b.scale = xnorm > 0 ? xnorm : 1.0;
  const Vector x = spec.x / b.scale;

  ConeProgram& prog = b.program;
  b.gamma = prog.AddScalar("gamma");
  b.h = prog.AddVariable("H", n, n, /*symmetric=*/true);
  b.l = prog.AddVariable("L", m, n);
  b.tau_p = prog.AddNonnegative("tau_p");
  const AffineExpr g = prog.Expr(b.gamma);
  const AffineExpr h = prog.Expr(b.h);
  const AffineExpr l = prog.Expr(b.l);

  // [1 x'; x H] >= 0.
  Matrix one(1, 1);
  one << 1.0;
  prog.AddPsd(AffineExpr::Blocks({{AffineExpr::Constant(one),
                                   AffineExpr::Constant(x.transpose())},
                                  {AffineExpr::Constant(x), h}}),
              "state bound");

  AffineExpr corner =
      UsesTerminal(spec.kind) ? -ScalarTimes(g, spec.terminal->p_inv.matrix())
                              : -h;
  if (IsNoisy(spec.kind)) {
    corner += ScalarTimes(g, Matrix::Identity(n, n) / spec.c);
  }
  const int nd = 2 * n + m;
  AffineExpr top_left =
      AffineExpr::Blocks({{corner, Zeros(n, n + m)},
                          {Zeros(n + m, n), Zeros(n + m, n + m)}}) +
      ScalarTimes(prog.Expr(b.tau_p), spec.prior->Full().matrix());

  if (UsesData(spec.kind)) {
    for (size_t j = 0; j < spec.data.size(); ++j) {
      const DataTerm& term = spec.data[j];
      const std::string idx = std::to_string(term.lag);
      b.lags.push_back(term.lag);
      if (spec.kind == ProblemKind::kAdaptiveNoisy) {
        VariableBlock o = prog.AddVariable("O_" + idx, n + 1, n + 1, true);
        VariableBlock l1 = prog.AddNonnegative("lambda1_" + idx);
        VariableBlock l2 = prog.AddNonnegative("lambda2_" + idx);
        const AffineExpr oe = prog.Expr(o);
        top_left += term.block * oe * term.block.transpose();
        const NoisyConstraintDescriptor d =
            NoisyConstraintBlock(term.point, term.n_i, *spec.noise,
                                 spec.coupling);
        const Matrix emb = d.reduction.transpose() * d.o_embedding;
        prog.AddPsd(emb * oe * emb.transpose() +
                        ScalarTimes(prog.Expr(l1), d.Lambda1Coefficient()) +
                        ScalarTimes(prog.Expr(l2), d.Lambda2Coefficient()),
                    "noise coupling lag " + idx);
        b.o.push_back(o);
        b.lambda1.push_back(l1);
        b.lambda2.push_back(l2);
      } else {
        VariableBlock tau = prog.AddNonnegative("tau_" + idx);
        top_left += ScalarTimes(prog.Expr(tau), term.block * term.n_i.matrix() *
                                                    term.block.transpose());
        b.tau.push_back(tau);
      }
    }
  }

  const AffineExpr col = AffineExpr::Blocks({{Zeros(n, n)}, {h}, {l}});
  const Matrix mr = SqrtFactor(w.r);
  const Matrix mq = SqrtFactor(w.q);
  const AffineExpr phi = AffineExpr::Blocks({{mr * l}, {mq * h}});
  const AffineExpr big = AffineExpr::Blocks(
      {{top_left, col, Zeros(nd, m + n)},
       {col.Transpose(), -h, phi.Transpose()},
       {Zeros(m + n, nd), phi, -ScalarTimes(g, Matrix::Identity(m + n, m + n))}});
  prog.AddNsd(big, "decrease", spec.eps_strict);

  const AffineExpr ch = b.scale * (w.c_x * h + w.c_u * l);
  prog.AddPsd(AffineExpr::Blocks({{h, ch.Transpose()},
                                  {ch, AffineExpr::Constant(
                                           Matrix::Identity(nc, nc))}}),
              "constraint");
  prog.Minimize(g);
  return b;
}

double SynthesisResult::MinResidual() const {
  double v = std::numeric_limits<double>::infinity();
  for (const BlockResidual& r : residuals) v = std::min(v, r.min_eigenvalue);
  return v;
}

double SynthesisResult::MinStrictSlack() const {
  double v = std::numeric_limits<double>::infinity();
  if (!program) return v;
  const auto& cons = program->program.constraints();
  for (size_t i = 0; i < residuals.size() && i < cons.size(); ++i) {
    if (cons[i].strict) v = std::min(v, residuals[i].margin_slack);
  }
  return v;
}

namespace {

Matrix Column(const std::vector<double>& v) {
  Matrix c(v.size(), 1);
  for (size_t i = 0; i < v.size(); ++i) c(i, 0) = v[i];
  return c;
}

// Maps a result in natural units back to a normalized assignment for `b`.
Vector AssignmentFromResult(const BuiltProgram& b, const SynthesisResult& r,
                            bool zero_data_multipliers) {
  const double s2 = b.scale * b.scale;
  Vector v = Vector::Zero(b.program.num_variables());
  ConeProgram::Assign(b.gamma, Matrix::Constant(1, 1, r.gamma / s2), &v);
  ConeProgram::Assign(b.h, r.h.matrix() / s2, &v);
  ConeProgram::Assign(b.l, r.l / s2, &v);
  const auto tp = r.multipliers.find("tau_p");
  if (tp != r.multipliers.end()) ConeProgram::Assign(b.tau_p, tp->second / s2, &v);
  if (zero_data_multipliers) return v;
  auto vec = [&](const char* key, const std::vector<VariableBlock>& blocks) {
    const auto it = r.multipliers.find(key);
    if (it == r.multipliers.end()) return;
    for (size_t j = 0; j < blocks.size() && j < size_t(it->second.rows()); ++j) {
      ConeProgram::Assign(blocks[j],
                          Matrix::Constant(1, 1, it->second(j, 0) / s2), &v);
    }
  };
  vec("tau", b.tau);
  vec("lambda1", b.lambda1);
  vec("lambda2", b.lambda2);
  for (size_t j = 0; j < b.o.size(); ++j) {
    const auto it = r.multipliers.find("O_" + std::to_string(j));
    if (it != r.multipliers.end()) ConeProgram::Assign(b.o[j], it->second / s2, &v);
  }
  return v;
}

}  // namespace

SynthesisResult SolveBuilt(std::shared_ptr<const BuiltProgram> built,
                           const SynthesisContext& ctx) {
  SynthesisResult res;
  res.kind = built->kind;
  const auto start = std::chrono::steady_clock::now();
  const SolverOutcome out = ctx.GetSolver().Solve(built->program, ctx.options);
  res.solve_time_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  res.status = out.status;
  res.detail = out.detail;
  res.iterations = out.iterations;
  res.program = built;
  if (out.status != SolverStatus::kOptimal) return res;

  const BuiltProgram& b = *built;
  const ConeProgram& prog = b.program;
  const double s2 = b.scale * b.scale;
  res.values = out.values;
  res.residuals = prog.Residuals(out.values);
  const double gamma_n = prog.Value(b.gamma, out.values)(0, 0);
  const SymMatrix h_n(prog.Value(b.h, out.values));
  const Matrix l_n = prog.Value(b.l, out.values);
  if (!(gamma_n > 0) || !IsPositiveDefinite(h_n, 1e-14)) {
    res.status = SolverStatus::kNumericalFailure;
    res.detail = "solution has non-positive gamma or H";
    return res;
  }
  res.gamma = s2 * gamma_n;
  res.h = h_n * s2;
  res.l = s2 * l_n;
  const SymMatrix h_inv = InvertPd(h_n);
  res.f = l_n * h_inv.matrix();
  res.p = h_inv * gamma_n;
  res.multipliers["tau_p"] = s2 * prog.Value(b.tau_p, out.values);
  auto collect = [&](const std::vector<VariableBlock>& blocks) {
    std::vector<double> vals;
    for (const VariableBlock& v : blocks) {
      vals.push_back(s2 * prog.Value(v, out.values)(0, 0));
    }
    return Column(vals);
  };
  if (!b.tau.empty()) res.multipliers["tau"] = collect(b.tau);
  if (!b.lambda1.empty()) {
    res.multipliers["lambda1"] = collect(b.lambda1);
    res.multipliers["lambda2"] = collect(b.lambda2);
  }
  for (size_t j = 0; j < b.o.size(); ++j) {
    res.multipliers["O_" + std::to_string(j)] = s2 * prog.Value(b.o[j], out.values);
  }
  if (!b.lags.empty()) {
    std::vector<double> lags(b.lags.begin(), b.lags.end());
    res.multipliers["lags"] = Column(lags);
  }
  return res;
}

namespace {

SynthesisResult BuildAndSolve(ProblemSpec spec, const SynthesisContext& ctx) {
  spec.eps_strict = ctx.options.eps_strict;
  spec.coupling = ctx.coupling;
  auto built = std::make_shared<const BuiltProgram>(BuildProgram(spec));
  return SolveBuilt(std::move(built), ctx);
}

void CheckDims(const Vector& x, const Qmi& prior, const Weights& weights) {
  weights.Validate();
  if (x.size() != weights.state_dim()) {
    throw ParameterError("state has dimension " + std::to_string(x.size()) +
                         ", expected " + std::to_string(weights.state_dim()));
  }
  CheckFinite(x, "state");
  if (prior.rows() != weights.state_dim() ||
      prior.cols() != weights.state_dim() + weights.input_dim()) {
    throw ParameterError("prior QMI shape does not match the weights");
  }
}

}  // namespace

SynthesisResult SolveInitial(const Vector& x0, const Qmi& prior,
                             const Weights& weights,
                             const SynthesisContext& ctx) {
  CheckDims(x0, prior, weights);
  ProblemSpec spec;
  spec.kind = ProblemKind::kInitial;
  spec.x = x0;
  spec.prior = &prior;
  spec.weights = &weights;
  return BuildAndSolve(std::move(spec), ctx);
}

SynthesisResult SolveAdaptive(const Vector& x_t, const Qmi& prior,
                              const DataWindow& window,
                              const VariationProfile& profile,
                              const TerminalCost& terminal,
                              const Weights& weights,
                              const SynthesisContext& ctx) {
  CheckDims(x_t, prior, weights);
  ProblemSpec spec;
  spec.kind = ProblemKind::kAdaptive;
  spec.x = x_t;
  spec.prior = &prior;
  spec.weights = &weights;
  spec.terminal = &terminal;
  spec.data = BuildDataTerms(window, profile, ctx.zero_threshold);
  return BuildAndSolve(std::move(spec), ctx);
}

SynthesisResult SolveInitialNoisy(const Vector& x0, const Qmi& prior,
                                  const Weights& weights, double c,
                                  const SynthesisContext& ctx) {
  CheckDims(x0, prior, weights);
  const double qmin = GetSpectralBounds(weights.q).lambda_min;
  if (!(c > qmin)) {
    throw ParameterError("noise constant c must exceed lambda_min(Q) = " +
                         std::to_string(qmin));
  }
  ProblemSpec spec;
  spec.kind = ProblemKind::kInitialNoisy;
  spec.x = x0;
  spec.prior = &prior;
  spec.weights = &weights;
  spec.c = c;
  SynthesisResult r = BuildAndSolve(std::move(spec), ctx);
  if (r.optimal() && !(GetSpectralBounds(r.p).lambda_max < c)) {
    r.status = SolverStatus::kNumericalFailure;
    r.detail = "post-solve check lambda_max(P) < c failed";
  }
  return r;
}

SynthesisResult SolveAdaptiveNoisy(const Vector& x_t, const Qmi& prior,
                                   const DataWindow& window,
                                   const VariationProfile& profile,
                                   const NoiseBound& noise,
                                   const TerminalCost& terminal,
                                   const Weights& weights, double c,
                                   const SynthesisContext& ctx) {
  CheckDims(x_t, prior, weights);
  if (noise.g.dim() != weights.state_dim()) {
    throw ParameterError("noise bound has wrong dimension");
  }
  const double qmin = GetSpectralBounds(weights.q).lambda_min;
  if (!(c > qmin)) {
    throw ParameterError("noise constant c must exceed lambda_min(Q)");
  }
  ProblemSpec spec;
  spec.kind = ProblemKind::kAdaptiveNoisy;
  spec.x = x_t;
  spec.prior = &prior;
  spec.weights = &weights;
  spec.terminal = &terminal;
  spec.noise = &noise;
  spec.c = c;
  spec.data = BuildDataTerms(window, profile, ctx.zero_threshold);
  return BuildAndSolve(std::move(spec), ctx);
}

SynthesisResult SolveBootstrap(const Vector& x_t, const Qmi& prior,
                               const DataWindow& window,
                               const VariationProfile& profile,
                               const Weights& weights,
                               const SynthesisContext& ctx) {
  if (window.empty()) {
    throw ParameterError("bootstrap synthesis needs at least one data point");
  }
  CheckDims(x_t, prior, weights);
  ProblemSpec spec;
  spec.kind = ProblemKind::kBootstrap;
  spec.x = x_t;
  spec.prior = &prior;
  spec.weights = &weights;
  spec.data = BuildDataTerms(window, profile, ctx.zero_threshold);
  return BuildAndSolve(std::move(spec), ctx);
}

NoiseConstantChoice ChooseNoiseConstant(const Vector& x0, const Qmi& prior,
                                        const Weights& weights,
                                        const SynthesisContext& ctx,
                                        int max_doublings) {
  const SynthesisResult base = SolveInitial(x0, prior, weights, ctx);
  if (!base.optimal()) {
    NoiseConstantChoice out;
    out.initial = base;
    return out;
  }
  NoiseConstantChoice out;
  out.c = std::max(2.0 * GetSpectralBounds(base.p).lambda_max,
                   2.0 * GetSpectralBounds(weights.q).lambda_min);
  for (out.doublings = 0;; ++out.doublings) {
    out.initial = SolveInitialNoisy(x0, prior, weights, out.c, ctx);
    if (out.initial.optimal() || out.doublings >= max_doublings) break;
    out.c *= 2.0;
  }
  return out;
}

double CandidateResidual(const BuiltProgram& built,
                         const SynthesisResult& backup) {
  const Vector v = AssignmentFromResult(built, backup, true);
  double worst = std::numeric_limits<double>::infinity();
  for (const BlockResidual& r : built.program.Residuals(v)) {
    worst = std::min(worst, r.min_eigenvalue);
  }
  return worst;
}

CertificateReport CheckCertificates(const SynthesisResult& result,
                                    const Vector& x_t, const Weights& weights,
                                    const std::optional<SymMatrix>& p_terminal,
                                    const std::vector<ModelSample>& models) {
  CertificateReport rep;
  if (!result.optimal() || !result.program) return rep;
  const Vector v = AssignmentFromResult(*result.program, result, false);
  rep.lmi_residuals = result.program->program.Residuals(v);
  rep.min_residual = std::numeric_limits<double>::infinity();
  for (const BlockResidual& r : rep.lmi_residuals) {
    rep.min_residual = std::min(rep.min_residual, r.min_eigenvalue);
  }
  rep.residuals_ok = rep.min_residual >= -1e-7;

  rep.bound_value = QuadForm(result.p, x_t);
  rep.bound_ok = rep.bound_value <= result.gamma + 1e-6;

  const double lnorm = std::max(1.0, result.l.norm());
  rep.gain_error = (result.f * result.h.matrix() - result.l).norm() / lnorm;
  rep.gain_consistent = rep.gain_error <= 1e-8;

  if (p_terminal) {
    rep.decay_checked = true;
    rep.decay_max_violation = -std::numeric_limits<double>::infinity();
    const Vector u = result.f * x_t;
    for (const ModelSample& ab : models) {
      const Vector xn = ab.first * x_t + ab.second * u;
      const double lhs =
          weights.StageCost(u, x_t) + QuadForm(*p_terminal, xn);
      const double viol = lhs - result.gamma;
      rep.decay_max_violation = std::max(rep.decay_max_violation, viol);
      ++rep.decay_models;
    }
    rep.decay_ok = rep.decay_models == 0 || rep.decay_max_violation <= 1e-6;
  }
  return rep;
}

}  // namespace ddmpc
