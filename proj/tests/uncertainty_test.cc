#include "ddmpc/uncertainty.h"

#include <cmath>

#include <gtest/gtest.h>

#include "test_util.h"

namespace ddmpc {
namespace {

using testing::RandomMatrix;
using testing::RandomPd;
using testing::RandomVector;

Matrix ExampleCenterA() {
  Matrix a(3, 3);
  a << 1.1, 0.1, 0, 0, 0.7, -0.1, 0, 0, 0.5;
  return a;
}

Matrix ExampleCenterB() {
  Matrix b(3, 1);
  b << 0.6, 0.1, 0.1;
  return b;
}

// Symmetric square root of a PSD matrix.
Matrix SqrtPsd(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  return es.eigenvectors() *
         es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

// A random matrix with spectral norm at most one.
Matrix RandomContraction(Rng& rng, int rows, int cols) {
  const Matrix u = RandomMatrix(rng, rows, cols);
  const double norm = Eigen::JacobiSVD<Matrix>(u).singularValues()(0);
  return u / std::max(norm, 1.0) * rng.Uniform();
}

TEST(QmiTest, ChecksInvariants) {
  EXPECT_NO_THROW(Qmi(SymMatrix::Identity(2), Matrix::Zero(2, 3),
                      -SymMatrix::Identity(3)));
  EXPECT_THROW(Qmi(SymMatrix::Identity(2), Matrix::Zero(2, 3),
                   SymMatrix::Identity(3)),
               QmiInvariantError);
  EXPECT_THROW(Qmi(-SymMatrix::Identity(2), Matrix::Zero(2, 3),
                   -SymMatrix::Identity(3)),
               QmiInvariantError);
  EXPECT_THROW(Qmi(SymMatrix::Identity(2), Matrix::Zero(3, 3),
                   -SymMatrix::Identity(3)),
               ParameterError);
}

TEST(QmiFromBallTest, ExampleOneBlocks) {
  const Qmi q = QmiFromBall(ExampleCenterA(), ExampleCenterB(), 0.22);
  Matrix m11(3, 3);
  m11 << -1.5316, -0.13, -0.06, -0.13, -0.4616, 0.04, -0.06, 0.04, -0.2116;
  EXPECT_LT((q.m11().matrix() - m11).cwiseAbs().maxCoeff(), 1e-12);
  Matrix m12(3, 4);
  m12 << ExampleCenterA(), ExampleCenterB();
  EXPECT_LT((q.m12() - m12).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((q.m22().matrix() + Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(),
            1e-12);
}

TEST(QmiFromBallTest, UnitBallAtOrigin) {
  const Qmi q = QmiFromBall(Matrix::Zero(2, 2), Matrix::Zero(2, 1), 1.0);
  EXPECT_TRUE(q.m11().matrix().isApprox(Matrix::Identity(2, 2)));
  EXPECT_TRUE(q.m12().isZero());
  EXPECT_TRUE(q.m22().matrix().isApprox(-Matrix::Identity(3, 3)));
}

TEST(QmiFromBallTest, RejectsNonPositiveRadius) {
  EXPECT_THROW(QmiFromBall(ExampleCenterA(), ExampleCenterB(), 0.0),
               ParameterError);
  EXPECT_THROW(QmiFromBall(ExampleCenterA(), ExampleCenterB(), -1.0),
               ParameterError);
}

TEST(QmiFromBallTest, ContainsExactlyTheBall) {
  Rng rng(7);
  const Qmi q = QmiFromBall(ExampleCenterA(), ExampleCenterB(), 0.22);
  for (int k = 0; k < 200; ++k) {
    Matrix e = RandomMatrix(rng, 3, 4);
    e /= Eigen::JacobiSVD<Matrix>(e).singularValues()(0);
    const Matrix inside = 0.22 * 0.999 * e;
    const Matrix outside = 0.22 * 1.001 * e;
    EXPECT_TRUE(MembershipPrior(ExampleCenterA() + inside.leftCols(3),
                                ExampleCenterB() + inside.rightCols(1), q));
    EXPECT_FALSE(MembershipPrior(ExampleCenterA() + outside.leftCols(3),
                                 ExampleCenterB() + outside.rightCols(1), q,
                                 0.0));
  }
}

// The prior blocks displayed for the two-state study violate the
// well-posedness condition M11 - M12 M22^-1 M12' > 0.
TEST(QmiTest, RejectsDisplayedTwoStatePriorBlocks) {
  Matrix m11(2, 2);
  m11 << -1.26, -0.03, -0.03, -0.25;
  Matrix m12(2, 3);
  m12 << 1.1, 0, 0.3, 0, 0.4, 0.1;
  EXPECT_THROW(Qmi(SymMatrix(m11), m12, -SymMatrix::Identity(3)),
               QmiInvariantError);
}

TEST(QmiFromEllipsoidTest, ConsistentTwoStatePrior) {
  Matrix a(2, 2);
  a << 1.1, 0, 0, 0.4;
  Matrix b(2, 1);
  b << 0.3, 0.1;
  const Qmi q = QmiFromEllipsoid(a, b, SymMatrix::Diagonal(Vector::Map(
                                           std::vector<double>{0.04, 0.01}.data(),
                                           2)));
  Matrix m11(2, 2);
  m11 << -1.26, -0.03, -0.03, -0.16;
  EXPECT_LT((q.m11().matrix() - m11).cwiseAbs().maxCoeff(), 1e-12);
  // Corners of the parameter box a in [0.9, 1.3], b in [0.3, 0.5].
  for (double av : {0.9, 1.3}) {
    for (double bv : {0.3, 0.5}) {
      Matrix at(2, 2);
      at << av, 0, 0, bv;
      EXPECT_TRUE(MembershipPrior(at, b, q)) << av << " " << bv;
    }
  }
}

TEST(VariationQmiTest, Lipschitz) {
  const VariationProfile p = VariationProfile::Lipschitz(0.01, 2, 1);
  const Qmi q = VariationQmi(p, 5);
  EXPECT_LT((q.m11().matrix() - 0.0025 * Matrix::Identity(2, 2))
                .cwiseAbs()
                .maxCoeff(),
            1e-15);
  EXPECT_TRUE(q.m12().isZero());
  EXPECT_TRUE(q.m22().matrix().isApprox(-Matrix::Identity(3, 3)));
  EXPECT_EQ(p.DefaultWindow(), 5);
}

TEST(VariationQmiTest, LipschitzModulo) {
  const double beta = 11.0 * M_PI / 300.0;
  const VariationProfile p = VariationProfile::LipschitzModulo(beta, 12, 1e-8,
                                                               3, 1);
  EXPECT_LT((VariationQmi(p, 24).m11().matrix() - 1e-8 * Matrix::Identity(3, 3))
                .cwiseAbs()
                .maxCoeff(),
            1e-20);
  const double expected = 121.0 / 90000.0 * M_PI * M_PI * 9.0;
  EXPECT_LT((VariationQmi(p, 3).m11().matrix() -
             expected * Matrix::Identity(3, 3))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
  EXPECT_EQ(p.DefaultWindow(), std::nullopt);
}

TEST(VariationQmiTest, PeriodicAndCustom) {
  const VariationProfile periodic =
      VariationProfile::Periodic(4, 1e-6, std::nullopt, 2, 1);
  EXPECT_TRUE(periodic.HasInformationAt(8));
  EXPECT_FALSE(periodic.HasInformationAt(3));
  EXPECT_THROW(VariationQmi(periodic, 3), ParameterError);
  EXPECT_NEAR(VariationQmi(periodic, 8).m11()(0, 0), 1e-6, 1e-20);

  std::map<int, Qmi> table;
  table.emplace(1, Qmi(SymMatrix::Identity(2) * 0.5, Matrix::Zero(2, 3),
                       -SymMatrix::Identity(3)));
  const VariationProfile custom = VariationProfile::Custom(table, 2, 1);
  EXPECT_NEAR(VariationQmi(custom, 1).m11()(0, 0), 0.5, 1e-15);
  EXPECT_THROW(VariationQmi(custom, 2), ParameterError);
}

TEST(VariationQmiTest, Errors) {
  const VariationProfile p = VariationProfile::Lipschitz(0.01, 2, 1);
  EXPECT_THROW(VariationQmi(p, 0), ParameterError);
  EXPECT_THROW(VariationProfile::Lipschitz(-1.0, 2, 1), ParameterError);
  EXPECT_THROW(VariationProfile::LipschitzModulo(0.1, 0, 1e-8, 2, 1),
               ParameterError);
  EXPECT_THROW(VariationProfile::Periodic(12, 0.0, std::nullopt, 2, 1),
               ParameterError);
}

TEST(ComputeNiTest, LipschitzClosedForm) {
  Rng rng(8);
  for (int k = 0; k < 1000; ++k) {
    const int n = 1 + k % 4;
    const int m = 1 + k % 2;
    const double l = rng.Uniform(0.001, 2.0);
    const Qmi qmi(SymMatrix::Identity(n) * (l * l), Matrix::Zero(n, n + m),
                  -SymMatrix::Identity(n + m));
    const Vector x = RandomVector(rng, n);
    const Vector u = RandomVector(rng, m);
    Vector z(n + m);
    z << x, u;
    const SymMatrix ni = ComputeNi(qmi, x, u);
    Matrix expected = Matrix::Zero(n + 1, n + 1);
    expected.topLeftCorner(n, n) = l * l * Matrix::Identity(n, n);
    expected(n, n) = -1.0 / z.squaredNorm();
    ASSERT_LT((ni.matrix() - expected).cwiseAbs().maxCoeff(), 1e-12) << k;
  }
}

TEST(ComputeNiTest, ScalingTheDataScalesTheTrailingEntry) {
  const Qmi qmi(SymMatrix::Identity(2) * 0.04, Matrix::Zero(2, 3),
                -SymMatrix::Identity(3));
  Vector x(2), u(1);
  x << 0.3, -0.2;
  u << 0.5;
  const SymMatrix a = ComputeNi(qmi, x, u);
  const SymMatrix b = ComputeNi(qmi, 2 * x, 2 * u);
  EXPECT_NEAR(b(2, 2), a(2, 2) / 4, 1e-15);
  EXPECT_TRUE(b.matrix().topLeftCorner(2, 2).isApprox(
      a.matrix().topLeftCorner(2, 2)));
}

TEST(ComputeNiTest, DegenerateData) {
  const Qmi qmi(SymMatrix::Identity(2), Matrix::Zero(2, 3),
                -SymMatrix::Identity(3));
  EXPECT_THROW(ComputeNi(qmi, Vector::Zero(2), Vector::Zero(1)),
               DegenerateDataError);
  EXPECT_THROW(ComputeNi(qmi, Vector::Zero(3), Vector::Zero(1)),
               ParameterError);
}

// With M22 = -I the QMI set is {D = M12 + S^(1/2) U : |U| <= 1} where
// S = M11 + M12 M12'. Every D z must satisfy the N_i QMI, and the rank-one
// extreme points reach its boundary.
TEST(ComputeNiTest, InducedDisturbanceSetBySampling) {
  Rng rng(9);
  for (int k = 0; k < 50; ++k) {
    const int n = 2 + k % 2;
    const int m = 1;
    const Matrix m12 = 0.3 * RandomMatrix(rng, n, n + m);
    const SymMatrix s = RandomPd(rng, n, 0.05);
    const SymMatrix m11(s.matrix() - m12 * m12.transpose());
    const Qmi qmi(m11, m12, -SymMatrix::Identity(n + m));
    const Matrix s_half = SqrtPsd(s.matrix());
    const Vector x = RandomVector(rng, n);
    const Vector u = RandomVector(rng, m);
    Vector z(n + m);
    z << x, u;
    const SymMatrix ni = ComputeNi(qmi, x, u);
    for (int j = 0; j < 20; ++j) {
      const Matrix d = m12 + s_half * RandomContraction(rng, n, n + m);
      const Vector w = d * z;
      ASSERT_GE(MinEigenvalue(DisturbanceForm(ni.matrix(), w)), -1e-10);
    }
    Vector dir = RandomVector(rng, n);
    dir.normalize();
    const Matrix extreme = m12 + s_half * dir * (z / z.norm()).transpose();
    const Vector w = extreme * z;
    EXPECT_NEAR(MinEigenvalue(DisturbanceForm(ni.matrix(), w)), 0.0, 1e-9);
    EXPECT_LT(MinEigenvalue(DisturbanceForm(ni.matrix(), 1.01 * (w - m12 * z) +
                                                             m12 * z)),
              0.0);
  }
}

TEST(ComputeNiTest, LipschitzDisturbanceBallBySampling) {
  Rng rng(10);
  const double l = 0.05;
  const Qmi qmi(SymMatrix::Identity(2) * (l * l), Matrix::Zero(2, 3),
                -SymMatrix::Identity(3));
  for (int k = 0; k < 200; ++k) {
    const Vector x = RandomVector(rng, 2);
    const Vector u = RandomVector(rng, 1);
    Vector z(3);
    z << x, u;
    const SymMatrix ni = ComputeNi(qmi, x, u);
    const Matrix delta = l * RandomContraction(rng, 2, 3);
    const Vector w = delta * z;
    EXPECT_LE(w.norm(), l * z.norm() + 1e-15);
    EXPECT_GE(MinEigenvalue(DisturbanceForm(ni.matrix(), w)), -1e-12);
    Vector big = RandomVector(rng, 2);
    big *= 1.01 * l * z.norm() / big.norm();
    EXPECT_LT(MinEigenvalue(DisturbanceForm(ni.matrix(), big)), 0.0);
  }
}

TEST(DataBlockTest, Examples) {
  DataPoint p{Vector::Constant(1, 1.0), Vector::Constant(1, 2.0),
              Vector::Constant(1, 3.0), 0};
  Matrix expected(3, 2);
  expected << 1, 3, 0, -1, 0, -2;
  EXPECT_EQ(DataBlock(p), expected);

  DataPoint zero{Vector::Zero(2), Vector::Zero(1), Vector::Zero(2), 0};
  const Matrix b = DataBlock(zero);
  EXPECT_EQ(b.rows(), 5);
  EXPECT_EQ(b.cols(), 3);
  Matrix expected_zero = Matrix::Zero(5, 3);
  expected_zero.topLeftCorner(2, 2).setIdentity();
  EXPECT_EQ(b, expected_zero);
}

TEST(DataWindowTest, TruncatesAndChecksContiguity) {
  DataWindow w(3);
  for (int t = 0; t < 5; ++t) {
    w.Append({Vector::Constant(2, t), Vector::Constant(1, 1.0),
              Vector::Constant(2, t + 1.0), t});
  }
  EXPECT_EQ(w.size(), 3);
  EXPECT_EQ(w.points().front().time_index, 2);
  EXPECT_EQ(w.current_time(), 5);
  EXPECT_THROW(w.Append({Vector::Zero(2), Vector::Zero(1), Vector::Zero(2), 7}),
               ParameterError);
  EXPECT_THROW(DataWindow(0), ParameterError);
  EXPECT_THROW(DataWindow().current_time(), ParameterError);
}

class PiTauTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(12);
    for (int t = 0; t < 4; ++t) {
      window_.Append({RandomVector(rng, 2), RandomVector(rng, 1),
                      RandomVector(rng, 2), t});
    }
  }
  DataWindow window_;
  VariationProfile profile_ = VariationProfile::Lipschitz(0.01, 2, 1);
};

TEST_F(PiTauTest, ZeroMultipliersGiveZero) {
  EXPECT_TRUE(AssemblePiTau(window_, profile_, {0, 0, 0, 0}).matrix().isZero());
}

TEST_F(PiTauTest, SingleTerm) {
  const std::vector<DataTerm> terms = BuildDataTerms(window_, profile_, 1e-8);
  ASSERT_EQ(terms.size(), 4u);
  EXPECT_EQ(terms[0].lag, 4);
  EXPECT_EQ(terms[3].lag, 1);
  const Matrix expected =
      terms[2].block * terms[2].n_i.matrix() * terms[2].block.transpose();
  EXPECT_LT((AssemblePiTau(terms, {0, 0, 1, 0}).matrix() - expected)
                .cwiseAbs()
                .maxCoeff(),
            1e-15);
}

TEST_F(PiTauTest, LinearInMultipliers) {
  const std::vector<double> a{0.1, 2.0, 0.0, 3.5};
  const std::vector<double> b{1.0, 0.5, 4.0, 0.25};
  std::vector<double> sum(4), scaled(4);
  for (int i = 0; i < 4; ++i) {
    sum[i] = a[i] + b[i];
    scaled[i] = 3.0 * a[i];
  }
  const Matrix pa = AssemblePiTau(window_, profile_, a).matrix();
  const Matrix pb = AssemblePiTau(window_, profile_, b).matrix();
  EXPECT_LT((AssemblePiTau(window_, profile_, sum).matrix() - pa - pb)
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
  EXPECT_LT((AssemblePiTau(window_, profile_, scaled).matrix() - 3.0 * pa)
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST_F(PiTauTest, Errors) {
  EXPECT_THROW(AssemblePiTau(window_, profile_, {0, 0, -1, 0}), ParameterError);
  EXPECT_THROW(AssemblePiTau(window_, profile_, {0, 0}), ParameterError);
}

TEST(BuildDataTermsTest, SkipsDegenerateAndUninformativePoints) {
  DataWindow w;
  w.Append({Vector::Zero(2), Vector::Zero(1), Vector::Zero(2), 0});
  w.Append({Vector::Ones(2), Vector::Ones(1), Vector::Ones(2), 1});
  EXPECT_EQ(
      BuildDataTerms(w, VariationProfile::Lipschitz(0.01, 2, 1), 1e-8).size(),
      1u);
  // Periodic without off-period information: only lags that are multiples
  // of the period contribute.
  const VariationProfile periodic =
      VariationProfile::Periodic(2, 1e-8, std::nullopt, 2, 1);
  const std::vector<DataTerm> terms = BuildDataTerms(w, periodic, 1e-8);
  ASSERT_EQ(terms.size(), 0u);
}

TEST(MembershipTest, PriorExamples) {
  const Qmi q = QmiFromBall(ExampleCenterA(), ExampleCenterB(), 0.22);
  EXPECT_TRUE(MembershipPrior(ExampleCenterA(), ExampleCenterB(), q));
  Matrix e = Matrix::Zero(3, 3);
  e(1, 2) = 1.0;
  EXPECT_FALSE(
      MembershipPrior(ExampleCenterA() + 2 * 0.22 * e, ExampleCenterB(), q));
}

TEST(MembershipTest, ConsistencyExamples) {
  Rng rng(13);
  const double l = 0.05;
  const Qmi qmi(SymMatrix::Identity(2) * (l * l), Matrix::Zero(2, 3),
                -SymMatrix::Identity(3));
  const Matrix a = RandomMatrix(rng, 2, 2);
  const Matrix b = RandomMatrix(rng, 2, 1);
  const Vector x = RandomVector(rng, 2);
  const Vector u = RandomVector(rng, 1);
  Vector z(3);
  z << x, u;
  const SymMatrix ni = ComputeNi(qmi, x, u);
  // Exact data: zero virtual disturbance.
  const DataPoint exact{x, u, a * x + b * u, 0};
  EXPECT_TRUE(MembershipConsistency(a, b, exact, ni));
  // Virtual disturbance beyond L |z|.
  Vector w = RandomVector(rng, 2);
  w *= 1.1 * l * z.norm() / w.norm();
  const DataPoint far{x, u, a * x + b * u + w, 0};
  EXPECT_FALSE(MembershipConsistency(a, b, far, ni));
  const DataPoint near{x, u, a * x + b * u + w / 1.2, 0};
  EXPECT_TRUE(MembershipConsistency(a, b, near, ni));
}

NoisyConstraintDescriptor sub_block(const DataPoint& p, const SymMatrix& ni,
                                    const NoiseBound& noise) {
  return NoisyConstraintBlock(p, ni, noise, NoiseCoupling::kSubstituted);
}

TEST(NoisyConstraintBlockTest, CancellationAndZero) {
  Rng rng(14);
  const Qmi qmi(SymMatrix::Identity(2) * 0.01, Matrix::Zero(2, 3),
                -SymMatrix::Identity(3));
  const DataPoint p{RandomVector(rng, 2), RandomVector(rng, 1),
                    RandomVector(rng, 2), 0};
  const SymMatrix ni = ComputeNi(qmi, p.x, p.u);
  const NoiseBound noise(SymMatrix::Identity(2) * 1e4);
  for (NoiseCoupling coupling :
       {NoiseCoupling::kSubstituted, NoiseCoupling::kIndependent}) {
    const NoisyConstraintDescriptor d =
        NoisyConstraintBlock(p, ni, noise, coupling);
    EXPECT_TRUE(d.Evaluate(Matrix::Zero(3, 3), 0, 0).isZero());
    EXPECT_EQ(d.dim(), coupling == NoiseCoupling::kSubstituted ? 4 : 5);
  }
  // With the combined coordinate substituted, O = N and l1 = 1 cancel on
  // the noise-free coordinates (I, w_data).
  const Matrix val = sub_block(p, ni, noise).Evaluate(ni.matrix(), 1.0, 0.0);
  EXPECT_LT(val.topLeftCorner(3, 3).cwiseAbs().maxCoeff(), 1e-15);
}

// Whenever the coupling block is PSD, every data disturbance in the N_i set
// plus every noise sample in the G-ellipsoid lies in the O QMI.
TEST(NoisyConstraintBlockTest, FeasibleMultipliersImplyInclusion) {
  Rng rng(15);
  const int n = 2;
  const Qmi qmi(SymMatrix::Identity(n) * 0.01, Matrix::Zero(n, n + 1),
                -SymMatrix::Identity(n + 1));
  const DataPoint p{RandomVector(rng, n), RandomVector(rng, 1),
                    RandomVector(rng, n), 0};
  const SymMatrix ni = ComputeNi(qmi, p.x, p.u);
  const NoiseBound noise(SymMatrix::Identity(n) * 1e4);
  const NoisyConstraintDescriptor d = NoisyConstraintBlock(p, ni, noise);
  Vector z(n + 1);
  z << p.x, p.u;
  const double r_data = 0.1 * z.norm();
  const double r_noise = 0.01;
  // O = blkdiag((r_data + r_noise)^2 I, -1) with l1, l2 from the S-procedure
  // for the triangle inequality (the bound is tight, so the block is singular).
  const double l1 = (r_data + r_noise) * z.squaredNorm() / r_data;
  const double l2 = (r_data + r_noise) / r_noise;
  Matrix o = Matrix::Zero(n + 1, n + 1);
  o.topLeftCorner(n, n) =
      std::pow(r_data + r_noise, 2) * Matrix::Identity(n, n);
  o(n, n) = -1.0;
  ASSERT_GE(MinEigenvalue(d.Evaluate(o, l1, l2)), -1e-12);
  for (int k = 0; k < 500; ++k) {
    Vector wd = RandomVector(rng, n);
    wd *= r_data * rng.Uniform() / wd.norm();
    Vector wn = RandomVector(rng, n);
    wn *= r_noise * rng.Uniform() / wn.norm();
    ASSERT_GE(MinEigenvalue(DisturbanceForm(ni.matrix(), wd)), -1e-12);
    ASSERT_GE(MinEigenvalue(DisturbanceForm(o, wd + wn)), -1e-12);
  }
}

TEST(NoiseBoundTest, RequiresPositiveDefinite) {
  EXPECT_THROW(NoiseBound(SymMatrix::Zero(2)), QmiInvariantError);
}

}  // namespace
}  // namespace ddmpc
