#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ctstl/errors.hpp"
#include "ctstl/lin_dynamics.hpp"
#include "oracles.hpp"

using namespace ctstl;

namespace {

LinearSystem double_integrator() {
  Matrix a(2, 2);
  a << 0, 1, 0, 0;
  Matrix b(2, 1);
  b << 0, 1;
  return LinearSystem(a, b);
}

}  // namespace

TEST(StepMatrices, DoubleIntegratorClosedForm) {
  const auto sys = double_integrator();
  for (double t : {0.1, 0.2, 0.5, 1.7}) {
    const auto s = step_matrices(sys, t);
    EXPECT_NEAR(s.ad(0, 0), 1.0, 1e-14);
    EXPECT_NEAR(s.ad(0, 1), t, 1e-14);
    EXPECT_NEAR(s.ad(1, 0), 0.0, 1e-14);
    EXPECT_NEAR(s.ad(1, 1), 1.0, 1e-14);
    EXPECT_NEAR(s.bd(0, 0), t * t / 2, 1e-14);
    EXPECT_NEAR(s.bd(1, 0), t, 1e-14);
  }
}

TEST(StepMatrices, ZeroDynamics) {
  Matrix b(3, 2);
  b << 1, 2, -3, 0.5, 0, 4;
  LinearSystem sys(Matrix::Zero(3, 3), b);
  const auto s = step_matrices(sys, 0.7);
  EXPECT_TRUE(s.ad.isApprox(Matrix::Identity(3, 3), 1e-15));
  EXPECT_TRUE(s.bd.isApprox(0.7 * b, 1e-14));
}

TEST(StepMatrices, ScalarDecayAgainstRk4) {
  LinearSystem sys(Matrix::Constant(1, 1, -1.0), Matrix::Constant(1, 1, 1.0));
  const auto s = step_matrices(sys, std::log(2.0));
  EXPECT_NEAR(s.ad(0, 0), 0.5, 1e-14);
  EXPECT_NEAR(s.bd(0, 0), 0.5, 1e-14);
  const Vector x = oracle::rk4_adaptive(sys.a(), sys.b(), Vector::Zero(1),
                                        Vector::Ones(1), std::log(2.0));
  EXPECT_NEAR(x(0), 0.5, 1e-10);
}

TEST(StepMatrices, ZeroStepIsIdentity) {
  const auto s = step_matrices(double_integrator(), 0.0);
  EXPECT_EQ(s.ad, Matrix::Identity(2, 2));
  EXPECT_EQ(s.bd, Matrix::Zero(2, 1));
}

TEST(StepMatrices, RejectsBadInput) {
  Matrix a(2, 2);
  a << 0, std::nan(""), 0, 0;
  EXPECT_THROW(LinearSystem(a, Matrix::Zero(2, 1)), InvalidSystem);
  EXPECT_THROW(LinearSystem(Matrix::Zero(2, 3), Matrix::Zero(2, 1)), InvalidSystem);
  EXPECT_THROW(LinearSystem(Matrix::Zero(2, 2), Matrix::Zero(3, 1)), InvalidSystem);
  EXPECT_THROW(step_matrices(double_integrator(), -1.0), InvalidSystem);
}

TEST(StepMatrices, Semigroup) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> d(-2, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 4;
    Matrix a = Matrix::NullaryExpr(n, n, [&] { return d(rng); });
    LinearSystem sys(a, Matrix::Ones(n, 1));
    const double s = 0.3 + 0.1 * (trial % 3);
    const double t = 0.2 + 0.05 * (trial % 5);
    const Matrix lhs = step_matrices(sys, s + t).ad;
    const Matrix rhs = step_matrices(sys, s).ad * step_matrices(sys, t).ad;
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(StepMatrices, RandomSystemsMatchRk4) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> d(-2, 2);
  std::uniform_real_distribution<double> dt(0.01, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 4;
    const int m = 1 + trial % 2;
    Matrix a = Matrix::NullaryExpr(n, n, [&] { return d(rng); });
    Matrix b = Matrix::NullaryExpr(n, m, [&] { return d(rng); });
    LinearSystem sys(a, b);
    Vector x0 = Vector::NullaryExpr(n, [&] { return d(rng); });
    Vector u = Vector::NullaryExpr(m, [&] { return d(rng); });
    const double h = dt(rng);
    const auto s = step_matrices(sys, h);
    const Vector exact = s.ad * x0 + s.bd * u;
    const Vector ref = oracle::rk4_adaptive(a, b, x0, u, h);
    EXPECT_LE((exact - ref).cwiseAbs().maxCoeff(), 1e-8) << "trial " << trial;
  }
}

TEST(TimeGridTest, UniformAndLookup) {
  const auto g = TimeGrid::uniform(2.0, 10);
  EXPECT_EQ(g.size(), 11);
  EXPECT_DOUBLE_EQ(g.t_final(), 2.0);
  EXPECT_EQ(g.index_of(0.6), std::optional<int>(3));
  EXPECT_FALSE(g.index_of(0.63).has_value());
  EXPECT_EQ(g.interval_containing(0.63), 3);
  EXPECT_EQ(g.interval_containing(2.0), 9);
}

TEST(TimeGridTest, RejectsMalformedNodes) {
  EXPECT_THROW(TimeGrid({0.0, 0.5, 0.5, 1.0}, {false, false, false, false}), InvalidGrid);
  EXPECT_THROW(TimeGrid({0.1, 1.0}, {false, false}), InvalidGrid);
  EXPECT_THROW(TimeGrid({0.0, 1.0}, {false, true}), InvalidGrid);
  EXPECT_THROW(TimeGrid::uniform(0.0, 3), InvalidGrid);
}

TEST(ModeDecompose, NilpotentSingleBlock) {
  RowVector row(2);
  row << 1, 0;
  const auto dec = mode_decompose(double_integrator(), row, 0.0);
  ASSERT_EQ(dec.blocks.size(), 1u);
  EXPECT_EQ(dec.blocks[0].eigenvalue, 0.0);
  EXPECT_EQ(dec.blocks[0].size, 2);
}

TEST(ModeDecompose, DiagonalTwoBlocks) {
  Matrix a(2, 2);
  a << -1, 0, 0, -2;
  LinearSystem sys(a, Matrix::Ones(2, 1));
  RowVector row(2);
  row << 1, 1;
  const auto dec = mode_decompose(sys, row, 0.5);
  ASSERT_EQ(dec.blocks.size(), 2u);
  std::vector<double> eig{dec.blocks[0].eigenvalue, dec.blocks[1].eigenvalue};
  std::sort(eig.begin(), eig.end());
  EXPECT_NEAR(eig[0], -2.0, 1e-12);
  EXPECT_NEAR(eig[1], -1.0, 1e-12);
  EXPECT_EQ(dec.blocks[0].size, 1);
  EXPECT_EQ(dec.blocks[1].size, 1);
  EXPECT_EQ(dec.sigma, 0.5);
}

TEST(ModeDecompose, ComplexSpectrumRejected) {
  Matrix a(2, 2);
  a << 0, 1, -1, 0;
  LinearSystem sys(a, Matrix::Ones(2, 1));
  EXPECT_THROW(mode_decompose(sys, RowVector::Ones(2), 0.0), ComplexModesUnsupported);
}

TEST(ModeDecompose, ReconstructionOnRandomRealSpectra) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> d(-2, 2);
  std::uniform_int_distribution<int> pick(0, 2);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 4;
    const int m = 1 + trial % 2;
    // Real spectrum with possible repeats and Jordan chains: A = V J V^-1.
    Matrix j = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      j(i, i) = (pick(rng) == 0 && i > 0) ? j(i - 1, i - 1) : std::round(4 * d(rng)) / 4;
      if (i > 0 && j(i, i) == j(i - 1, i - 1) && pick(rng) > 0) j(i - 1, i) = 1.0;
    }
    Matrix v = Matrix::Identity(n, n) + 0.3 * Matrix::NullaryExpr(n, n, [&] { return d(rng); });
    Matrix a = v * j * v.inverse();
    Matrix b = Matrix::NullaryExpr(n, m, [&] { return d(rng); });
    LinearSystem sys(a, b);
    RowVector row = RowVector::NullaryExpr(n, [&] { return d(rng); });
    const double off = d(rng);
    ModeDecomposition dec;
    try {
      dec = mode_decompose(sys, row, off);
    } catch (const DecompositionUnstable&) {
      // Permitted for ill-conditioned draws; the result would not be trusted.
      continue;
    }
    int total = 0;
    for (const auto& blk : dec.blocks) total += blk.size;
    EXPECT_EQ(total, n);
    Vector x0 = Vector::NullaryExpr(n, [&] { return d(rng); });
    Vector u = Vector::NullaryExpr(m, [&] { return d(rng); });
    for (double t : {0.0, 0.13, 0.7, 1.0}) {
      const auto s = step_matrices(sys, t);
      const double exact = row.dot(s.ad * x0 + s.bd * u) + off;
      EXPECT_NEAR(dec.evaluate(x0, u, t), exact, 1e-9 * (1 + std::abs(exact)))
          << "trial " << trial << " t " << t;
    }
  }
}

TEST(ModeDecompose, InputFeedthroughRow) {
  RowVector row(2);
  row << 0, 2;
  RowVector d(1);
  d << 3;
  const auto dec = mode_decompose(double_integrator(), row, 1.0, d);
  Vector x0(2);
  x0 << 0.5, -1;
  Vector u(1);
  u << 0.25;
  for (double t : {0.0, 0.4}) {
    const double v = 2 * (-1 + 0.25 * t) + 3 * 0.25 + 1.0;
    EXPECT_NEAR(dec.evaluate(x0, u, t), v, 1e-12);
  }
}

TEST(InterpolantTest, HandValues) {
  auto sys = std::make_shared<const LinearSystem>(double_integrator());
  Vector x(2);
  x << 1, -1;
  Interpolant free(sys, 0.0, 2.0, x, Vector::Zero(1));
  EXPECT_EQ(free.at(0.0), x);
  const Vector mid = free.at(0.5);
  EXPECT_NEAR(mid(0), 0.5, 1e-14);
  EXPECT_NEAR(mid(1), -1.0, 1e-14);

  Interpolant pushed(sys, 3.0, 4.0, Vector::Zero(2), Vector::Constant(1, 2.0));
  const Vector end = pushed.at(4.0);
  EXPECT_NEAR(end(0), 1.0, 1e-14);
  EXPECT_NEAR(end(1), 2.0, 1e-14);
  EXPECT_THROW(pushed.at(4.1), OutOfWindow);
  EXPECT_THROW(pushed.at(2.9), OutOfWindow);
}

TEST(InterpolantTest, MatchesRk4OverUnitWindow) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> d(-2, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 4;
    Matrix a = Matrix::NullaryExpr(n, n, [&] { return d(rng); });
    Matrix b = Matrix::NullaryExpr(n, 1, [&] { return d(rng); });
    auto sys = std::make_shared<const LinearSystem>(a, b);
    Vector x0 = Vector::NullaryExpr(n, [&] { return d(rng); });
    Vector u = Vector::Constant(1, d(rng));
    Interpolant it(sys, 0.0, 1.0, x0, u);
    for (double t : {0.25, 0.5, 1.0}) {
      const Vector ref = oracle::rk4_adaptive(a, b, x0, u, t);
      EXPECT_LE((it.at(t) - ref).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}
