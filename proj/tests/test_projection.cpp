#include <gtest/gtest.h>

#include "flexagg/diffgrad.hpp"
#include "flexagg/projection.hpp"

using namespace flexagg;

namespace {

// T = 1 with slack energy rows and a degenerate power interval [0, 0].
FacetOffsets degenerate_interval() {
  Vec h(4);
  h << 5.0, 5.0, 0.0, 0.0;
  return FacetOffsets(h);
}

}  // namespace

TEST(Projection, FeasibleBoxIsUnchanged) {
  for (int T : {1, 3, 6}) {
    const Horizon hz(T, 1.0);
    const FacetOffsets h0 = box_offsets(hz, Vec::Zero(T), Vec::Ones(T));
    const ProjectedBase pb = project(h0, 0.01, hz);
    ASSERT_TRUE(pb.optimal());
    EXPECT_LE((pb.h_tilde.values - h0.values).lpNorm<Eigen::Infinity>(), 1e-8);
  }
}

TEST(Projection, DegenerateIntervalIsWidenedSymmetrically) {
  const Horizon hz(1, 1.0);
  const ProjectedBase pb = project(degenerate_interval(), 0.1, hz);
  ASSERT_TRUE(pb.optimal());
  EXPECT_NEAR(pb.h_tilde.values[2], 0.1, 1e-9);
  EXPECT_NEAR(pb.h_tilde.values[3], 0.1, 1e-9);
  EXPECT_NEAR(pb.h_tilde.values[0], 5.0, 1e-9);
  EXPECT_NEAR(pb.u[0], 0.0, 1e-9);
}

TEST(Projection, InvariantsHold) {
  const Horizon hz(3, 1.0);
  Vec h(12);
  h << 0.5, -0.8, 0.3, 0.9, 1.0, -0.2, 0.4, 0.6, -0.3, 0.2, 0.7, 0.1;
  const ProjectedBase pb = project(FacetOffsets(h), 0.01, hz);
  ASSERT_TRUE(pb.optimal());
  const Mat H = build_facet_matrix(hz);
  EXPECT_LE((H * pb.u + Vec::Constant(12, 0.01) - pb.h_tilde.values).maxCoeff(), 1e-9);
  EXPECT_GE(pb.lambda.minCoeff(), -1e-9);
  EXPECT_LE(pb.lambda.cwiseProduct(pb.g).cwiseAbs().maxCoeff(), 1e-7);
}

// Clarabel references (tests/oracles/oracles.py).
TEST(Projection, MatchesReferenceSolver) {
  {
    const Horizon hz(2, 1.0);
    Vec h(8);
    h << 0.5, -0.8, 0.3, 0.9, 1.0, -0.2, 0.4, 0.6;
    const ProjectedBase pb = project(FacetOffsets(h), 0.01, hz);
    ASSERT_TRUE(pb.optimal());
    EXPECT_LE((pb.h_tilde.values - h).lpNorm<Eigen::Infinity>(), 1e-8);
  }
  {
    const Horizon hz(2, 1.0);
    Vec h(8), ref(8);
    h << 1.0, 1.0, 1.0, 1.0, -0.5, 1.0, -0.5, 1.0;
    ref << 1.0, 1.0, 1.0, 1.0, 0.01, 1.0, 0.01, 1.0;
    const ProjectedBase pb = project(FacetOffsets(h), 0.01, hz);
    ASSERT_TRUE(pb.optimal());
    EXPECT_LE((pb.h_tilde.values - ref).lpNorm<Eigen::Infinity>(), 1e-8);
  }
  {
    const Horizon hz(3, 1.0);
    Vec h(12), ref(12);
    h << 0.5, -0.8, 0.3, 0.9, 1.0, -0.2, 0.4, 0.6, -0.3, 0.2, 0.7, 0.1;
    ref << 0.5, -0.356666666667, 0.3, 0.9, 1.0, 0.243333333333, 0.4, 0.6, 0.143333333333, 0.2, 0.7, 0.1;
    const ProjectedBase pb = project(FacetOffsets(h), 0.01, hz);
    ASSERT_TRUE(pb.optimal());
    EXPECT_LE((pb.h_tilde.values - ref).lpNorm<Eigen::Infinity>(), 1e-8);
  }
}

TEST(Projection, SmallMarginLimit) {
  const Horizon hz(2, 1.0);
  Vec h(8);
  h << 1.0, 1.0, 1.0, 1.0, -0.5, 1.0, -0.5, 1.0;
  const ProjectedBase a = project(FacetOffsets(h), 1e-6, hz);
  const ProjectedBase b = project(FacetOffsets(h), 1e-8, hz);
  ASSERT_TRUE(a.optimal());
  ASSERT_TRUE(b.optimal());
  EXPECT_LE((a.h_tilde.values - b.h_tilde.values).lpNorm<Eigen::Infinity>(), 1e-5);
}

TEST(Projection, DefaultEpsilonIsRelativeToMedian) {
  Vec h(4);
  h << 1.0, -3.0, 2.0, 10.0;
  EXPECT_DOUBLE_EQ(default_epsilon(FacetOffsets(h)), 2.5e-3);
  EXPECT_DOUBLE_EQ(default_epsilon(FacetOffsets(Vec::Zero(4))), 1e-6);
  EXPECT_THROW(project(FacetOffsets(h), 0.0, Horizon(1, 1.0)), Error);
}

TEST(ProjectionGradient, InteriorIsIdentity) {
  const Horizon hz(3, 1.0);
  const FacetOffsets h0 = box_offsets(hz, Vec::Zero(3), Vec::Ones(3));
  const ProjectionJacobian J = projection_gradient(project(h0, 0.01, hz), hz);
  // No facet is pushed, so the witness point is free and the system is rank deficient.
  EXPECT_NE(J.solve_kind, JacobianSolve::kSingular);
  EXPECT_LE((J.d_htilde_d_h0 - Mat::Identity(12, 12)).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(ProjectionGradient, DegenerateIntervalByHand) {
  // Both power rows active: h̃_ū = ε + (a − b)/2, h̃_u̲ = ε − (a − b)/2.
  const Horizon hz(1, 1.0);
  const ProjectionJacobian J = projection_gradient(project(degenerate_interval(), 0.1, hz), hz);
  Mat expected = Mat::Identity(4, 4);
  expected.block(2, 2, 2, 2) << 0.5, -0.5, -0.5, 0.5;
  EXPECT_LE((J.d_htilde_d_h0 - expected).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(ProjectionGradient, MatchesCentralDifferences) {
  const Horizon hz(3, 1.0);
  Vec h(12);
  h << 0.5, -0.8, 0.3, 0.9, 1.0, -0.2, 0.4, 0.6, -0.3, 0.2, 0.7, 0.1;
  const double eps = 0.01;
  const ProjectedBase pb = project(FacetOffsets(h), eps, hz);
  const ProjectionJacobian J = projection_gradient(pb, hz);
  auto f = [&](const Vec& x) { return project(FacetOffsets(x), eps, hz).h_tilde.values; };
  const FdReport rep = finite_difference_check(f, h, J.d_htilde_d_h0, 1e-5, 1e-4, complementarity_margin(pb));
  EXPECT_FALSE(rep.unreliable);
  EXPECT_GT(rep.compared, 0);
  EXPECT_TRUE(rep.pass()) << "max rel error " << rep.max_rel_error;
}
