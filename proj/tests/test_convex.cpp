#include <gtest/gtest.h>

#include "flexagg/convex.hpp"

using namespace flexagg;

namespace {

SpMat dense(std::initializer_list<std::initializer_list<double>> rows) {
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return to_sparse(m);
}

Vec vec_of(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

// Reference optima below come from HiGHS / Clarabel (tests/oracles/oracles.py).
TEST(ConvexSolver, SmallLpMatchesReference) {
  ConeProgram lp;
  lp.c = vec_of({1.0, 2.0, -1.0});
  lp.G = dense({{1, 1, 1}, {-1, 0, 0}, {0, -1, 0}, {0, 0, -1}, {0, 0, 1}, {1, -1, 0}});
  lp.h = vec_of({4.0, 0.0, 0.0, 0.0, 3.0, 1.0});
  lp.A = dense({{1, 0, 1}});
  lp.b = vec_of({2.5});
  const PrimalDualSolution sol = solve(lp, 1e-10);
  ASSERT_EQ(sol.status, SolveStatus::kOptimal);
  EXPECT_NEAR(sol.objective, -2.5, 1e-8);
  EXPECT_NEAR(sol.primal[0], 0.0, 1e-7);
  EXPECT_NEAR(sol.primal[1], 0.0, 1e-7);
  EXPECT_NEAR(sol.primal[2], 2.5, 1e-7);
  EXPECT_LE(sol.residuals.max(), 1e-8);
  EXPECT_GE(sol.ineq_multipliers.minCoeff(), -1e-12);
}

TEST(ConvexSolver, SmallQpMatchesReference) {
  ConeProgram qp;
  qp.Q = dense({{2.0, 0.5, 0.0}, {0.5, 1.0, 0.2}, {0.0, 0.2, 3.0}});
  qp.c = vec_of({-1.0, 0.5, -2.0});
  qp.G = dense({{1, 1, 1}, {-1, 0, 0}, {0, 1, -1}});
  qp.h = vec_of({0.5, 0.2, 0.1});
  const PrimalDualSolution sol = solve(qp, 1e-11);
  ASSERT_EQ(sol.status, SolveStatus::kOptimal);
  EXPECT_NEAR(sol.primal[0], 0.756286266922, 1e-8);
  EXPECT_NEAR(sol.primal[1], -1.02514506771, 1e-8);
  EXPECT_NEAR(sol.primal[2], 0.735009671177, 1e-8);
  EXPECT_NEAR(sol.objective, -1.36943907157, 1e-9);
}

TEST(ConvexSolver, ComplementarityHolds) {
  ConeProgram lp;
  lp.c = vec_of({-1.0, -1.0});
  lp.G = dense({{1, 2}, {3, 1}, {-1, 0}, {0, -1}});
  lp.h = vec_of({4.0, 6.0, 0.0, 0.0});
  const PrimalDualSolution sol = solve(lp, 1e-10);
  ASSERT_EQ(sol.status, SolveStatus::kOptimal);
  // Vertex (1.6, 1.2), objective −2.8.
  EXPECT_NEAR(sol.primal[0], 1.6, 1e-8);
  EXPECT_NEAR(sol.primal[1], 1.2, 1e-8);
  for (Eigen::Index i = 0; i < sol.slacks.size(); ++i) {
    EXPECT_LE(std::abs(sol.slacks[i] * sol.ineq_multipliers[i]), 1e-8);
  }
  EXPECT_NEAR(sol.ineq_multipliers[0], 0.4, 1e-7);
  EXPECT_NEAR(sol.ineq_multipliers[1], 0.2, 1e-7);
}

TEST(ConvexSolver, DetectsInfeasible) {
  ConeProgram lp;
  lp.c = vec_of({1.0});
  lp.G = dense({{1}, {-1}});
  lp.h = vec_of({-1.0, -1.0});
  EXPECT_EQ(solve(lp, 1e-9).status, SolveStatus::kInfeasible);
}

TEST(ConvexSolver, DetectsUnbounded) {
  ConeProgram lp;
  lp.c = vec_of({-1.0, 0.0});
  lp.G = dense({{-1, 0}, {0, 1}, {0, -1}});
  lp.h = vec_of({0.0, 1.0, 1.0});
  EXPECT_EQ(solve(lp, 1e-9).status, SolveStatus::kUnbounded);
}

TEST(ConvexSolver, RejectsMalformedPrograms) {
  ConeProgram lp;
  lp.c = vec_of({1.0, 1.0});
  lp.G = dense({{1, 1, 1}});
  lp.h = vec_of({1.0});
  try {
    solve(lp);
    FAIL() << "expected a dimension error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }

  ConeProgram qp;
  qp.c = vec_of({0.0, 0.0});
  qp.Q = dense({{1.0, 2.0}, {2.0, 1.0}});
  try {
    solve(qp);
    FAIL() << "expected an indefinite-Q error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

TEST(KktLinearSolve, DirectRegularizedSingular) {
  const SpMat J = dense({{2, 0}, {0, 4}});
  const LinearSolveResult a = solve_kkt_jacobian(J, Mat(vec_of({2.0, 8.0})));
  EXPECT_EQ(a.kind, JacobianSolve::kDirect);
  EXPECT_NEAR(a.x(0, 0), 1.0, 1e-14);
  EXPECT_NEAR(a.x(1, 0), 2.0, 1e-14);

  // Rank one but consistent: minimum-norm solution (0.5, 0.5).
  const SpMat R = dense({{1, 1}, {1, 1}});
  const LinearSolveResult b = solve_kkt_jacobian(R, Mat(vec_of({1.0, 1.0})));
  EXPECT_EQ(b.kind, JacobianSolve::kRegularized);
  EXPECT_NEAR(b.x(0, 0), 0.5, 1e-7);
  EXPECT_NEAR(b.x(1, 0), 0.5, 1e-7);

  const LinearSolveResult c = solve_kkt_jacobian(R, Mat(vec_of({1.0, -1.0})));
  EXPECT_EQ(c.kind, JacobianSolve::kSingular);
}
