#include <gtest/gtest.h>

#include "flexagg/flexibility.hpp"

using namespace flexagg;

TEST(FacetMatrix, LowerTriangularBlock) {
  const Mat H = build_facet_matrix(Horizon(2, 1.0));
  ASSERT_EQ(H.rows(), 8);
  EXPECT_EQ(H(0, 0), 1.0);
  EXPECT_EQ(H(0, 1), 0.0);
  EXPECT_EQ(H(1, 0), 1.0);
  EXPECT_EQ(H(1, 1), 1.0);
}

TEST(FacetMatrix, SingleSlotHalfStep) {
  const Mat H = build_facet_matrix(Horizon(1, 0.5));
  Vec expected(4);
  expected << 0.5, -0.5, 1.0, -1.0;
  EXPECT_TRUE(H.col(0).isApprox(expected));
}

TEST(FacetMatrix, CumulativeSumsOfOnes) {
  const Mat H = build_facet_matrix(Horizon(3, 1.0));
  Vec expected(12);
  expected << 1, 2, 3, -1, -2, -3, 1, 1, 1, -1, -1, -1;
  EXPECT_EQ(H * Vec::Ones(3), expected);
}

TEST(Offsets, HandEvaluatedSpec) {
  const Horizon hz(2, 1.0);
  DsrSpec s;
  s.t_p = 1;
  s.t_d = 2;
  s.u_max = 2.0;
  s.u_min = -2.0;
  s.demand_fraction = 0.5;
  s.x_max = 10.0;
  s.x_init = 0.0;
  EXPECT_DOUBLE_EQ(s.demand(hz), 1.0);
  const FacetOffsets h = offsets_from_spec(s, hz);
  EXPECT_EQ(h.x_lower(), Vec::LinSpaced(2, 0.0, 1.0));
  EXPECT_DOUBLE_EQ(h.u_upper()[0], 2.0);
  EXPECT_DOUBLE_EQ(h.u_upper()[1], 2.0);
  EXPECT_DOUBLE_EQ(h.u_lower()[0], -2.0);
  EXPECT_DOUBLE_EQ(h.x_upper()[0], 2.0);
  EXPECT_DOUBLE_EQ(h.x_upper()[1], 4.0);
}

TEST(Offsets, OutsideWindowIsPinnedAtZero) {
  const Horizon hz(4, 1.0);
  DsrSpec s;
  s.t_p = 2;
  s.t_d = 3;
  const FacetOffsets h = offsets_from_spec(s, hz);
  EXPECT_EQ(h.u_upper()[0], 0.0);
  EXPECT_EQ(h.u_lower()[0], 0.0);
  EXPECT_EQ(h.u_upper()[3], 0.0);
  EXPECT_GT(h.u_upper()[1], 0.0);
}

TEST(Offsets, ZeroDemandContainsOrigin) {
  const Horizon hz(3, 1.0);
  DsrSpec s;
  s.t_p = 1;
  s.t_d = 3;
  s.demand_fraction = 0.0;
  const FacetOffsets h = offsets_from_spec(s, hz);
  EXPECT_EQ(h.x_lower(), Vec::Zero(3));
  EXPECT_TRUE(contains(HPolytope{hz, h}, Vec::Zero(3)));
}

TEST(Offsets, RejectsBadSpecs) {
  const Horizon hz(3, 1.0);
  DsrSpec s;
  s.t_p = 2;
  s.t_d = 2;
  EXPECT_THROW(offsets_from_spec(s, hz), Error);
  s.t_d = 3;
  s.x_max = 1.0;
  s.demand_fraction = 1.0;
  try {
    offsets_from_spec(s, hz);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasible);
  }
}

TEST(Membership, UnitSquare) {
  const Horizon hz(2, 1.0);
  const HPolytope box{hz, box_offsets(hz, Vec::Zero(2), Vec::Ones(2))};
  EXPECT_TRUE(contains(box, Vec::Constant(2, 0.5)));
  Vec out(2);
  out << 1.1, 0.0;
  EXPECT_FALSE(contains(box, out));
  EXPECT_TRUE(contains(box, chebyshev_radius(box).center));
}

TEST(Chebyshev, UnitSquareCenter) {
  const Horizon hz(2, 1.0);
  // Tight energy rows would cut the square; box_offsets leaves them slack.
  const ChebyshevBall b = chebyshev_radius(HPolytope{hz, box_offsets(hz, Vec::Zero(2), Vec::Ones(2))});
  ASSERT_EQ(b.status, SolveStatus::kOptimal);
  EXPECT_NEAR(b.center[0], 0.5, 1e-7);
  EXPECT_NEAR(b.center[1], 0.5, 1e-7);
  EXPECT_NEAR(b.radius, 0.5, 1e-7);
}

TEST(Chebyshev, EmptySetHasNegativeRadius) {
  const Horizon hz(1, 1.0);
  Vec lo(1), hi(1);
  lo << 1.0;
  hi << 0.0;
  const ChebyshevBall b = chebyshev_radius(HPolytope{hz, box_offsets(hz, lo, hi)});
  EXPECT_LT(b.radius, 0.0);
}

TEST(Chebyshev, IntervalWithSlackEnergy) {
  const Horizon hz(1, 1.0);
  const ChebyshevBall b = chebyshev_radius(HPolytope{hz, box_offsets(hz, Vec::Zero(1), Vec::Constant(1, 2.0))});
  EXPECT_NEAR(b.radius, 1.0, 1e-7);
  EXPECT_NEAR(b.center[0], 1.0, 1e-7);
}

TEST(Sampler, RangesAndDeterminism) {
  const Horizon hz(24, 1.0);
  const auto a = sample_fleet(50, hz, 7);
  const auto b = sample_fleet(50, hz, 7);
  ASSERT_EQ(a.size(), 50u);
  for (size_t i = 0; i < a.size(); ++i) {
    const DsrSpec& s = a[i];
    EXPECT_GE(s.x_max, 40.0);
    EXPECT_LE(s.x_max, 60.0);
    EXPECT_GE(s.u_max, 6.0);
    EXPECT_LE(s.u_max, 9.0);
    EXPECT_GE(s.u_min, -9.0);
    EXPECT_LE(s.u_min, -6.0);
    EXPECT_GE(s.t_p, 1);
    EXPECT_LT(s.t_p, s.t_d);
    EXPECT_LE(s.t_d, 24);
    EXPECT_LE(s.x_init, 0.4 * s.x_max);
    EXPECT_GE(s.demand_fraction, 0.2);
    EXPECT_LE(s.demand_fraction, 0.5);
    EXPECT_EQ(s.x_max, b[i].x_max);
    EXPECT_EQ(s.t_p, b[i].t_p);
    EXPECT_TRUE(contains(HPolytope{hz, offsets_from_spec(s, hz)}, greedy_profile(s, hz), 1e-9));
  }
}

TEST(Sampler, TwoSlotWindowIsForced) {
  const auto f = sample_fleet(1, Horizon(2, 1.0), 3);
  EXPECT_EQ(f[0].t_p, 1);
  EXPECT_EQ(f[0].t_d, 2);
}

TEST(Sampler, CoveringFleetCoversEverySlot) {
  const Horizon hz(6, 1.0);
  EXPECT_TRUE(covers_all_slots(sample_covering_fleet(10, hz, 11), hz));
}

TEST(MinkowskiOracle, TwoUnitIntervals) {
  const Horizon hz(1, 1.0);
  const HPolytope box{hz, box_offsets(hz, Vec::Zero(1), Vec::Ones(1))};
  EXPECT_TRUE(minkowski_membership_oracle({box, box}, Vec::Constant(1, 2.0)));
  EXPECT_FALSE(minkowski_membership_oracle({box, box}, Vec::Constant(1, 2.01)));
}

TEST(MinkowskiOracle, SumOfCenters) {
  const Horizon hz(3, 1.0);
  const auto fleet = fleet_offsets(sample_covering_fleet(3, hz, 5), hz);
  std::vector<HPolytope> polys;
  Vec total = Vec::Zero(3);
  for (const auto& h : fleet) {
    polys.push_back({hz, h});
    total += chebyshev_radius(polys.back()).center;
  }
  EXPECT_TRUE(minkowski_membership_oracle(polys, total));
}
