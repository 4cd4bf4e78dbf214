#include "fehmm/saddle.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace fehmm;

namespace {

SpMat sparse(const Mat& A) { return A.sparseView(); }

Mat spd(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Mat A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = u(rng);
  return A * A.transpose() + n * Mat::Identity(n, n);
}

}  // namespace

TEST(Saddle, NoConstraintsIdentity) {
  const Vec f = Vec::LinSpaced(5, 1.0, 5.0);
  const auto sol = solve_saddle(sparse(Mat::Identity(5, 5)), ConstraintSet(5), f, Vec());
  EXPECT_LT((sol.x.col(0) - f).norm(), 1e-14);
  EXPECT_EQ(sol.lambda.rows(), 0);
}

TEST(Saddle, DirichletRowsAreExact) {
  std::mt19937_64 rng(1);
  const Mat K = spd(6, rng);
  ConstraintSet c(6);
  c.add_dirichlet(0, 0.25);
  c.add_dirichlet(4, -1.5);
  const Vec f = Vec::Ones(6);
  const auto sol = solve_saddle(sparse(K), c, f, c.targets());
  EXPECT_NEAR(sol.x(0, 0), 0.25, 1e-14);
  EXPECT_NEAR(sol.x(4, 0), -1.5, 1e-14);
  const Vec r = K * sol.x.col(0) + c.apply_transpose(sol.lambda.col(0)) - f;
  EXPECT_LT(r.norm(), 1e-12 * f.norm());
}

TEST(Saddle, MultiplierIsReaction) {
  // u0 - k - u1 - k - u2 with u0 fixed and a force P on u2
  const double k = 3.0, P = 7.0;
  Mat K(3, 3);
  K << k, -k, 0, -k, 2 * k, -k, 0, -k, k;
  ConstraintSet c(3);
  c.add_dirichlet(0, 0.0);
  const Vec f = Eigen::Vector3d(0, 0, P);
  const auto sol = solve_saddle(sparse(K), c, f, c.targets());
  EXPECT_NEAR(sol.x(2, 0), 2 * P / k, 1e-12);
  EXPECT_NEAR(sol.lambda(0, 0), P, 1e-12);
}

TEST(Saddle, BlockEquationsLargeSystem) {
  // large enough to take the sparse path
  const int n = 400;
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, 2.0);
    if (i + 1 < n) {
      t.emplace_back(i, i + 1, -1.0);
      t.emplace_back(i + 1, i, -1.0);
    }
  }
  SpMat K(n, n);
  K.setFromTriplets(t.begin(), t.end());
  ConstraintSet c(n);
  c.add_dirichlet(0, 0.1);
  c.add_difference(n - 1, 1, 0.3);
  c.add_difference(50, 20, -0.2);
  const Vec f = Vec::Constant(n, 0.01);
  SaddlePointSolver solver;
  solver.factorize(K, c);
  const auto sol = solver.solve(f, c.targets());
  const Vec x = sol.x.col(0);
  EXPECT_LT((K * x + c.apply_transpose(sol.lambda.col(0)) - f).norm(), 1e-12 * (K * x).norm());
  EXPECT_LT(c.violation(x).norm(), 1e-12);
  EXPECT_LT(solver.worst_relative_residual(), 1e-12);
}

TEST(Saddle, SingularSystem) {
  Mat K = Mat::Zero(3, 3);
  K(0, 0) = 1.0;
  ConstraintSet c(3);
  c.add_dirichlet(1, 0.0);
  try {
    solve_saddle(sparse(K), c, Vec::Ones(3), c.targets());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularSystem);
  }
}

TEST(Constraints, RedundancyDetected) {
  ConstraintSet c(6);
  c.add_difference(1, 0, 0.0);
  c.add_difference(2, 1, 0.0);
  c.add_difference(2, 0, 0.0);
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConstraintRedundancy);
  }
  ConstraintSet ok(6);
  ok.add_dirichlet(0, 1.0);
  ok.add_difference(3, 2, 1.0);
  EXPECT_NO_THROW(ok.validate());
  EXPECT_TRUE(ok.disjoint());
}

TEST(Constraints, ProjectionAndLeastSquares) {
  ConstraintSet c(5);
  c.add_dirichlet(0, 0.0);
  c.add_difference(3, 1, 0.0);
  const Vec f = (Vec(5) << 1.0, 2.0, -1.0, 4.0, 0.5).finished();
  const Vec p = c.project(f);
  EXPECT_LT(c.apply(p).norm(), 1e-15);
  // f - p lies in range(G^T)
  const Vec lam = c.least_squares_multipliers(f);
  EXPECT_LT((f + c.apply_transpose(lam) - p).norm(), 1e-14);
  EXPECT_NEAR(p[0], 0.0, 1e-15);
  EXPECT_NEAR(p[1], 3.0, 1e-15);
  EXPECT_NEAR(p[3], 3.0, 1e-15);
  const Mat G = Mat(c.matrix());
  EXPECT_EQ(G.rows(), 2);
  EXPECT_EQ(G(1, 3), 1.0);
  EXPECT_EQ(G(1, 1), -1.0);
}
