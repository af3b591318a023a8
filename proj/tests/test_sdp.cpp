#include <cstdlib>

#include <gtest/gtest.h>

#include "iqcsync/sdp.hpp"

namespace iqcsync::sdp {
namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

TEST(AffineMatrix, EvaluatesLinearCombination) {
  LmiProblem p;
  const AffineMatrix X = p.add_symmetric("X", 2);
  const AffineMatrix y = p.add_scalar("y", false);
  Matrix A(2, 2);
  A << 1, 2, 3, 4;
  const AffineMatrix E = A.transpose() * X * A + 2.0 * kron(Matrix::Identity(2, 2), y) - AffineMatrix(Matrix::Identity(2, 2));
  Matrix Xv(2, 2);
  Xv << 1, 0.5, 0.5, 2;
  const Vector x = p.pack({{"X", Xv}, {"y", scalar(3.0)}});
  const Matrix expected = A.transpose() * Xv * A + 5.0 * Matrix::Identity(2, 2);
  EXPECT_TRUE(E.evaluate(x).isApprox(expected, 1e-14));
  EXPECT_TRUE(p.value("X", x).isApprox(Xv));
}

TEST(AffineMatrix, ProductOfVariablesIsRejected) {
  LmiProblem p;
  const AffineMatrix X = p.add_symmetric("X", 2);
  EXPECT_THROW(X * X, NonAffineError);
}

TEST(AffineMatrix, SymmetricBlocksFillUpperTriangle) {
  Matrix B(1, 2);
  B << 1, 2;
  const AffineMatrix S = symmetric_blocks({2, 1}, {{AffineMatrix(Matrix::Identity(2, 2))}, {AffineMatrix(B), {}}});
  const Matrix v = S.evaluate(Vector());
  Matrix expected(3, 3);
  expected << 1, 0, 1, 0, 1, 2, 1, 2, 0;
  EXPECT_TRUE(v.isApprox(expected));
}

TEST(Solve, ScalarMinimumIsOne) {
  // minimise g subject to [[g, 1], [1, 1]] >= 0, optimum g = 1.
  LmiProblem p;
  const AffineMatrix g = p.add_scalar("g", false);
  const AffineMatrix one(scalar(1.0));
  p.add_constraint(block_matrix({{g, one}, {one, one}}), Sense::PositiveSemidefinite, "epigraph");
  p.minimize(g);
  const LmiSolution s = solve(p);
  ASSERT_EQ(s.status, Status::Optimal) << s.message;
  ASSERT_TRUE(s.objective.has_value());
  EXPECT_NEAR(*s.objective, 1.0, 1e-7);
}

TEST(Solve, LyapunovStableIsFeasible) {
  LmiProblem p;
  const AffineMatrix P = p.add_symmetric("P", 2);
  Matrix A = -Matrix::Identity(2, 2);
  A(0, 1) = 3.0;
  p.add_constraint(P, Sense::PositiveDefinite, "P > 0");
  p.add_constraint(A.transpose() * P + P * A, Sense::NegativeDefinite, "lyapunov");
  const LmiSolution s = solve(p);
  ASSERT_TRUE(s.ok()) << s.message;
  const Matrix Pv = p.value("P", s.x);
  EXPECT_GT(Pv.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff(), 0.0);
  const Matrix AtP = A.transpose() * Pv;
  const Matrix L = AtP + AtP.transpose();
  EXPECT_LT(L.selfadjointView<Eigen::Lower>().eigenvalues().maxCoeff(), 0.0);
  for (const auto& c : s.checks) EXPECT_TRUE(c.satisfied) << c.label;
}

TEST(Solve, LyapunovUnstableIsInfeasible) {
  LmiProblem p;
  const AffineMatrix P = p.add_symmetric("P", 2);
  const Matrix A = Matrix::Identity(2, 2);
  p.add_constraint(P, Sense::PositiveDefinite, "P > 0");
  p.add_constraint(A.transpose() * P + P * A, Sense::NegativeDefinite, "lyapunov");
  EXPECT_EQ(solve(p).status, Status::Infeasible);
}

TEST(Solve, UnboundedObjective) {
  LmiProblem p;
  const AffineMatrix y = p.add_scalar("y", false);
  p.add_constraint(y, Sense::PositiveSemidefinite, "y >= 0");
  p.minimize(-1.0 * y);
  EXPECT_EQ(solve(p).status, Status::Unbounded);
}

TEST(LmiProblem, StrictMarginScalesWithConstant) {
  LmiProblem p(1e-3);
  const AffineMatrix y = p.add_scalar("y", false);
  p.add_constraint(y - AffineMatrix(scalar(3.0)), Sense::PositiveDefinite, "y > 3");
  ASSERT_EQ(p.constraints().size(), 1u);
  EXPECT_NEAR(p.constraints()[0].margin, 4e-3, 1e-15);
  const auto checks = p.check(p.pack({{"y", scalar(3.0 + 1e-4)}}));
  EXPECT_FALSE(checks[0].satisfied);
  EXPECT_TRUE(p.check(p.pack({{"y", scalar(3.01)}}))[0].satisfied);
}

TEST(Backend, UnknownSolverFallsBackToBuiltIn) {
  ::setenv("IQCSYNC_SOLVER", "mosek", 1);
  EXPECT_EQ(backend_name(), "ipm");
  ::unsetenv("IQCSYNC_SOLVER");
  EXPECT_EQ(backend_name(), "ipm");
}

}  // namespace
}  // namespace iqcsync::sdp
