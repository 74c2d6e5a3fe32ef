#pragma once

// Dispatch problems over an aggregate set and over the exact fleet.
//
//   peak:  minimize ‖u + p‖∞        cost:  minimize Δt·πᵀu
//
// Over ũ the decision is the lifted v ∈ U₀(h̃) with u = s_agg + S_agg v; the
// centralized benchmark optimizes every uᵢ ∈ Uᵢ jointly. The ∞-norm counts
// negative net load as well.

#include <cmath>
#include <string>
#include <vector>

#include "flexagg/convex.hpp"
#include "flexagg/flexibility.hpp"
#include "flexagg/protocols.hpp"

namespace flexagg {

enum class DispatchMethod { kAvg, kProposed, kCentralized };

inline std::string_view to_string(DispatchMethod m) {
  switch (m) {
    case DispatchMethod::kAvg: return "AVG";
    case DispatchMethod::kProposed: return "Proposed";
    case DispatchMethod::kCentralized: return "Centralized";
  }
  return "?";
}

struct DispatchResult {
  Vec u;  // aggregate profile, kW
  double objective = 0.0;
  double gap = 0.0;  // filled by gap_metrics
  DispatchMethod method = DispatchMethod::kProposed;
  SolveStatus status = SolveStatus::kNumericFailure;
  double max_violation = 0.0;  // re-check against the set optimized over
};

namespace detail {

/// Rows ±(offset + M·x) − s ≤ 0 over variables [x, s], appended at `row`.
inline void add_infinity_norm_rows(Triplets& g, Vec& h, int row, const Mat& M, const Vec& offset, int s_col) {
  const int T = static_cast<int>(M.rows());
  for (int t = 0; t < T; ++t) {
    for (int sign = 0; sign < 2; ++sign) {
      const double sg = sign == 0 ? 1.0 : -1.0;
      const int r = row + 2 * t + sign;
      for (int c = 0; c < M.cols(); ++c) {
        if (M(t, c) != 0.0) g.emplace_back(r, c, sg * M(t, c));
      }
      g.emplace_back(r, s_col, -1.0);
      h[r] = -sg * offset[t];
    }
  }
}

inline void check_profile(const Vec& v, int T, const char* what) {
  if (v.size() != T) throw Error(ErrorCode::kDimensionMismatch, std::string(what) + " has wrong length");
  if (!v.allFinite()) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " is not finite");
}

/// Lifted program over v ∈ U₀(h̃) (+ epigraph variable for the peak task).
inline DispatchResult dispatch_over_aggregate(const AggregateModel& model, const Horizon& hz, const Vec* load,
                                              const Vec* price, DispatchMethod method) {
  const int T = hz.T;
  if (model.T() != T || model.dt != hz.dt) throw Error(ErrorCode::kDimensionMismatch, "model horizon differs");
  const Mat H = build_facet_matrix(hz);
  const int m = 4 * T;
  const bool peak = load != nullptr;
  const int n = T + (peak ? 1 : 0);
  ConeProgram lp;
  lp.c = Vec::Zero(n);
  Triplets g;
  Vec h(m + (peak ? 2 * T : 0));
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < T; ++c) {
      if (H(r, c) != 0.0) g.emplace_back(r, c, H(r, c));
    }
  }
  h.head(m) = model.h_tilde.values;
  if (peak) {
    lp.c[T] = 1.0;
    add_infinity_norm_rows(g, h, m, model.S_agg, model.s_agg + *load, T);
  } else {
    lp.c.head(T) = hz.dt * model.S_agg.transpose() * *price;
  }
  lp.G.resize(static_cast<Eigen::Index>(h.size()), n);
  lp.G.setFromTriplets(g.begin(), g.end());
  lp.h = h;
  const PrimalDualSolution sol = solve(lp, 1e-10);
  DispatchResult out;
  out.method = method;
  out.status = sol.status;
  if (!sol.optimal()) return out;
  const Vec v = sol.primal.head(T);
  out.u = model.s_agg + model.S_agg * v;
  out.objective = peak ? (out.u + *load).cwiseAbs().maxCoeff() : hz.dt * price->dot(out.u);
  out.max_violation = (H * v - model.h_tilde.values).maxCoeff();
  return out;
}

inline DispatchResult dispatch_centralized(const std::vector<FacetOffsets>& fleet, const Horizon& hz, const Vec* load,
                                           const Vec* price) {
  const int T = hz.T;
  const int N = static_cast<int>(fleet.size());
  if (N < 1) throw Error(ErrorCode::kInvalidArgument, "fleet is empty");
  const Mat H = build_facet_matrix(hz);
  const int m = 4 * T;
  const bool peak = load != nullptr;
  const int n = N * T + (peak ? 1 : 0);
  ConeProgram lp;
  lp.c = Vec::Zero(n);
  Triplets g;
  Vec h(N * m + (peak ? 2 * T : 0));
  for (int i = 0; i < N; ++i) {
    if (fleet[static_cast<size_t>(i)].values.size() != m) throw Error(ErrorCode::kDimensionMismatch, "offsets must have length 4T");
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < T; ++c) {
        if (H(r, c) != 0.0) g.emplace_back(i * m + r, i * T + c, H(r, c));
      }
    }
    h.segment(i * m, m) = fleet[static_cast<size_t>(i)].values;
  }
  // Σᵢ uᵢ as a T × NT operator.
  Mat sum_op = Mat::Zero(T, N * T);
  for (int i = 0; i < N; ++i) sum_op.block(0, i * T, T, T).setIdentity();
  if (peak) {
    lp.c[N * T] = 1.0;
    add_infinity_norm_rows(g, h, N * m, sum_op, *load, N * T);
  } else {
    lp.c.head(N * T) = hz.dt * sum_op.transpose() * *price;
  }
  lp.G.resize(static_cast<Eigen::Index>(h.size()), n);
  lp.G.setFromTriplets(g.begin(), g.end());
  lp.h = h;
  const PrimalDualSolution sol = solve(lp, 1e-10);
  DispatchResult out;
  out.method = DispatchMethod::kCentralized;
  out.status = sol.status;
  if (!sol.optimal()) return out;
  out.u = sum_op * sol.primal.head(N * T);
  out.objective = peak ? (out.u + *load).cwiseAbs().maxCoeff() : hz.dt * price->dot(out.u);
  out.max_violation = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < N; ++i) {
    const Vec ui = sol.primal.segment(i * T, T);
    out.max_violation = std::max(out.max_violation, (H * ui - fleet[static_cast<size_t>(i)].values).maxCoeff());
  }
  return out;
}

}  // namespace detail

inline DispatchResult peak_min_over_aggregate(const AggregateModel& model, const Vec& load, const Horizon& hz,
                                              DispatchMethod method = DispatchMethod::kProposed) {
  detail::check_profile(load, hz.T, "load profile");
  return detail::dispatch_over_aggregate(model, hz, &load, nullptr, method);
}

inline DispatchResult cost_min_over_aggregate(const AggregateModel& model, const Vec& price, const Horizon& hz,
                                              DispatchMethod method = DispatchMethod::kProposed) {
  detail::check_profile(price, hz.T, "price profile");
  return detail::dispatch_over_aggregate(model, hz, nullptr, &price, method);
}

inline DispatchResult peak_min_centralized(const std::vector<FacetOffsets>& fleet, const Vec& load, const Horizon& hz) {
  detail::check_profile(load, hz.T, "load profile");
  return detail::dispatch_centralized(fleet, hz, &load, nullptr);
}

inline DispatchResult cost_min_centralized(const std::vector<FacetOffsets>& fleet, const Vec& price, const Horizon& hz) {
  detail::check_profile(price, hz.T, "price profile");
  return detail::dispatch_centralized(fleet, hz, nullptr, &price);
}

struct GapReport {
  double gap_avg = 0.0;
  double gap_proposed = 0.0;
  double improvement = 0.0;  // (obj_AVG − obj_Proposed)/|obj_AVG|
  bool absolute = false;     // gaps are obj − obj* because obj* ≈ 0
};

/// Relative gaps against the centralized optimum; fills `gap` on each result.
inline GapReport gap_metrics(const DispatchResult& centralized, DispatchResult& avg, DispatchResult& proposed,
                             double zero_tol = 1e-9) {
  GapReport r;
  const double ref = centralized.objective;
  r.absolute = std::abs(ref) <= zero_tol;
  auto gap = [&](double obj) { return r.absolute ? obj - ref : (obj - ref) / std::abs(ref); };
  r.gap_avg = gap(avg.objective);
  r.gap_proposed = gap(proposed.objective);
  avg.gap = r.gap_avg;
  proposed.gap = r.gap_proposed;
  r.improvement = std::abs(avg.objective) <= zero_tol ? avg.objective - proposed.objective
                                                      : (avg.objective - proposed.objective) / std::abs(avg.objective);
  return r;
}

}  // namespace flexagg
