#pragma once

// Nearest offsets with a strictly interior base set:
//
//   minimize ‖h0 − h0′‖²  over (h0′, u)  s.t.  H u + ε·1 ≤ h0′.
//
// Variables are (h0′, u) in that order; λ is the multiplier of the single
// block of 4T inequality rows.

#include <algorithm>
#include <vector>

#include "flexagg/convex.hpp"
#include "flexagg/flexibility.hpp"

namespace flexagg {

struct ProjectedBase {
  FacetOffsets h_tilde;
  Vec u;       // a point with H u + ε ≤ h̃
  Vec lambda;  // 4T, ≥ 0
  Vec g;       // H u + ε − h̃, ≤ 0
  std::vector<bool> active;  // λ_j > |g_j|
  double epsilon = 0.0;
  SolveStatus status = SolveStatus::kNumericFailure;
  KktResiduals residuals;

  bool optimal() const { return status == SolveStatus::kOptimal; }
};

inline double median_abs(const Vec& v) {
  std::vector<double> mags(static_cast<size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) mags[static_cast<size_t>(i)] = std::abs(v[i]);
  if (mags.empty()) return 0.0;
  const size_t mid = mags.size() / 2;
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(mid), mags.end());
  double med = mags[mid];
  if (mags.size() % 2 == 0) {
    med = 0.5 * (med + *std::max_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return med;
}

/// rel · median |h0|, floored so an all-zero vector still gets a margin.
inline double default_epsilon(const FacetOffsets& h0, double rel = 1e-3) {
  return std::max(rel * median_abs(h0.values), 1e-6);
}

inline ConeProgram build_projection_program(const FacetOffsets& h0, double epsilon, const Horizon& hz) {
  const int T = hz.T;
  const int m = 4 * T;
  if (h0.values.size() != m) throw Error(ErrorCode::kDimensionMismatch, "offsets must have length 4T");
  const Mat H = build_facet_matrix(hz);
  ConeProgram qp;
  qp.c = Vec::Zero(m + T);
  qp.c.head(m) = -2.0 * h0.values;
  Triplets q;
  for (int i = 0; i < m; ++i) q.emplace_back(i, i, 2.0);
  qp.Q.resize(m + T, m + T);
  qp.Q.setFromTriplets(q.begin(), q.end());
  Triplets g;
  for (int j = 0; j < m; ++j) {
    g.emplace_back(j, j, -1.0);
    for (int t = 0; t < T; ++t) {
      if (H(j, t) != 0.0) g.emplace_back(j, m + t, H(j, t));
    }
  }
  qp.G.resize(m, m + T);
  qp.G.setFromTriplets(g.begin(), g.end());
  qp.h = Vec::Constant(m, -epsilon);
  return qp;
}

inline ProjectedBase project(const FacetOffsets& h0, double epsilon, const Horizon& hz,
                             double tol = 1e-10) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::kInvalidArgument, "projection margin must be positive");
  const int T = hz.T;
  const int m = 4 * T;
  const ConeProgram qp = build_projection_program(h0, epsilon, hz);
  const PrimalDualSolution sol = solve(qp, tol);
  ProjectedBase out;
  out.epsilon = epsilon;
  out.status = sol.status;
  out.residuals = sol.residuals;
  out.h_tilde = FacetOffsets(sol.primal.head(m));
  out.u = sol.primal.tail(T);
  out.lambda = sol.ineq_multipliers;
  out.g = -sol.slacks;
  out.active.resize(static_cast<size_t>(m));
  for (int j = 0; j < m; ++j) out.active[static_cast<size_t>(j)] = out.lambda[j] > std::abs(out.g[j]);
  return out;
}

inline ProjectedBase project(const FacetOffsets& h0, const Horizon& hz) {
  return project(h0, default_epsilon(h0), hz);
}

}  // namespace flexagg
