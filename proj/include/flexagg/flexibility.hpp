#pragma once

// Individual flexibility polytopes {u : H u ≤ h} with the shared facet matrix
// H = [L; −L; I; −I], where L is the lower-triangular cumulative-energy map
// with entries Δt. Offsets are ordered [x̄, −x̲, ū, −u̲].

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "flexagg/convex.hpp"
#include "flexagg/error.hpp"

namespace flexagg {

struct Horizon {
  int T = 1;
  double dt = 1.0;

  Horizon() = default;
  Horizon(int slots, double step) : T(slots), dt(step) {
    if (T < 1 || !(dt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "horizon needs T ≥ 1, dt > 0");
  }
  int num_facets() const { return 4 * T; }
};

/// Facet blocks of an offsets vector.
enum class FacetFamily { kEnergyUpper = 0, kEnergyLower = 1, kPowerUpper = 2, kPowerLower = 3 };

/// Offsets h (length 4T) ordered [x̄, −x̲, ū, −u̲].
struct FacetOffsets {
  Vec values;

  FacetOffsets() = default;
  explicit FacetOffsets(Vec v) : values(std::move(v)) {}

  static FacetOffsets from_bounds(const Vec& x_upper, const Vec& x_lower, const Vec& u_upper,
                                  const Vec& u_lower) {
    const Eigen::Index T = x_upper.size();
    Vec h(4 * T);
    h << x_upper, -x_lower, u_upper, -u_lower;
    return FacetOffsets(std::move(h));
  }

  int T() const { return static_cast<int>(values.size() / 4); }
  Vec x_upper() const { return values.segment(0, T()); }
  Vec x_lower() const { return -values.segment(T(), T()); }
  Vec u_upper() const { return values.segment(2 * T(), T()); }
  Vec u_lower() const { return -values.segment(3 * T(), T()); }
  double& at(FacetFamily f, int t) { return values[static_cast<int>(f) * T() + t]; }
  double at(FacetFamily f, int t) const { return values[static_cast<int>(f) * T() + t]; }
};

struct HPolytope {
  Horizon horizon;
  FacetOffsets offsets;
};

/// Box {u : lo ≤ u ≤ hi} whose energy facets are left slack by `energy_margin`.
inline FacetOffsets box_offsets(const Horizon& hz, const Vec& lo, const Vec& hi,
                                double energy_margin = 1e3) {
  Vec xu(hz.T), xl(hz.T);
  double cum_hi = 0.0, cum_lo = 0.0;
  for (int t = 0; t < hz.T; ++t) {
    cum_hi += std::max(hi[t], 0.0) * hz.dt;
    cum_lo += std::min(lo[t], 0.0) * hz.dt;
    xu[t] = cum_hi + energy_margin;
    xl[t] = cum_lo - energy_margin;
  }
  return FacetOffsets::from_bounds(xu, xl, hi, lo);
}

inline Mat build_facet_matrix(const Horizon& hz) {
  const int T = hz.T;
  Mat H = Mat::Zero(4 * T, T);
  for (int i = 0; i < T; ++i) {
    for (int j = 0; j <= i; ++j) {
      H(i, j) = hz.dt;
      H(T + i, j) = -hz.dt;
    }
    H(2 * T + i, i) = 1.0;
    H(3 * T + i, i) = -1.0;
  }
  return H;
}

/// Power and energy envelope of one charging resource (units kWh, kW, slots).
/// The resource is connected during slots t_p … t_d (1-based, inclusive).
struct DsrSpec {
  double x_max = 50.0;
  double u_max = 7.0;
  double u_min = -7.0;
  int t_p = 1;
  int t_d = 2;
  double x_init = 0.0;
  double demand_fraction = 0.3;

  double demand(const Horizon& hz) const { return demand_fraction * u_max * (t_d - t_p) * hz.dt; }
  bool connected(int slot) const { return slot >= t_p && slot <= t_d; }
  void validate(const Horizon& hz) const {
    if (!(1 <= t_p && t_p < t_d && t_d <= hz.T)) {
      throw Error(ErrorCode::kInvalidArgument, "DsrSpec needs 1 ≤ t_p < t_d ≤ T");
    }
    if (!(u_min < 0.0 && 0.0 < u_max)) throw Error(ErrorCode::kInvalidArgument, "DsrSpec needs u_min < 0 < u_max");
    if (!(x_init >= 0.0 && x_init <= 0.4 * x_max)) {
      throw Error(ErrorCode::kInvalidArgument, "DsrSpec needs 0 ≤ x_init ≤ 0.4 x_max");
    }
    if (!(demand_fraction >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "negative demand fraction");
  }
};

inline void to_json(nlohmann::json& j, const DsrSpec& s) {
  j = nlohmann::json{{"x_max", s.x_max},   {"u_max", s.u_max},   {"u_min", s.u_min},
                     {"t_p", s.t_p},       {"t_d", s.t_d},       {"x_init", s.x_init},
                     {"demand_fraction", s.demand_fraction}};
}

inline void from_json(const nlohmann::json& j, DsrSpec& s) {
  j.at("x_max").get_to(s.x_max);
  j.at("u_max").get_to(s.u_max);
  j.at("u_min").get_to(s.u_min);
  j.at("t_p").get_to(s.t_p);
  j.at("t_d").get_to(s.t_d);
  j.at("x_init").get_to(s.x_init);
  j.at("demand_fraction").get_to(s.demand_fraction);
}

inline FacetOffsets offsets_from_spec(const DsrSpec& spec, const Horizon& hz) {
  spec.validate(hz);
  const double energy = spec.demand(hz);
  const double headroom = spec.x_max - spec.x_init;
  if (energy > headroom) {
    throw Error(ErrorCode::kInfeasible, "energy demand exceeds battery headroom");
  }
  Vec xu(hz.T), xl(hz.T), uu(hz.T), ul(hz.T);
  int plugged = 0;
  for (int t = 1; t <= hz.T; ++t) {
    const bool on = spec.connected(t);
    if (on) ++plugged;
    uu[t - 1] = on ? spec.u_max : 0.0;
    ul[t - 1] = on ? spec.u_min : 0.0;
    xl[t - 1] = t >= spec.t_d ? energy : 0.0;
    xu[t - 1] = std::min(headroom, spec.u_max * hz.dt * plugged);
  }
  return FacetOffsets::from_bounds(xu, xl, uu, ul);
}

inline bool contains(const HPolytope& poly, const Vec& u, double tol = 1e-9) {
  if (u.size() != poly.horizon.T) throw Error(ErrorCode::kDimensionMismatch, "point length ≠ T");
  const Vec viol = build_facet_matrix(poly.horizon) * u - poly.offsets.values;
  return viol.maxCoeff() <= tol;
}

struct ChebyshevBall {
  Vec center;
  double radius = 0.0;  // Euclidean; negative when the polytope is empty
  SolveStatus status = SolveStatus::kNumericFailure;
};

/// Largest inscribed ball, with facet rows normalized so `radius` is a
/// Euclidean distance.
inline ChebyshevBall chebyshev_radius(const HPolytope& poly) {
  const Mat H = build_facet_matrix(poly.horizon);
  const int T = poly.horizon.T;
  Mat G(H.rows(), T + 1);
  G.leftCols(T) = H;
  G.col(T) = H.rowwise().norm();
  ConeProgram lp;
  lp.c = Vec::Zero(T + 1);
  lp.c[T] = -1.0;
  lp.G = to_sparse(G);
  lp.h = poly.offsets.values;
  const PrimalDualSolution sol = solve(lp, 1e-9);
  ChebyshevBall ball;
  ball.status = sol.status;
  if (sol.status == SolveStatus::kUnbounded) {
    throw Error(ErrorCode::kUnbounded, "Chebyshev LP unbounded");
  }
  ball.center = sol.primal.head(T);
  ball.radius = sol.primal[T];
  return ball;
}

/// Draws N resources uniformly from the EV parameter ranges: capacity [40, 60]
/// kWh, u_max [6, 9] kW, u_min [−9, −6] kW, t_p ∈ {1…T−1}, t_d ∈ {t_p+1…T},
/// x_init ∈ [0, 0.4 x_max], demand fraction [0.2, 0.5]. A draw whose demand
/// exceeds its headroom is redrawn.
inline std::vector<DsrSpec> sample_fleet(int N, const Horizon& hz, std::uint64_t seed) {
  if (N < 1) throw Error(ErrorCode::kInvalidArgument, "fleet size must be ≥ 1");
  if (hz.T < 2) throw Error(ErrorCode::kInvalidArgument, "sampling needs T ≥ 2");
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto integer = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  std::vector<DsrSpec> fleet;
  fleet.reserve(static_cast<size_t>(N));
  while (static_cast<int>(fleet.size()) < N) {
    DsrSpec s;
    s.x_max = uniform(40.0, 60.0);
    s.u_max = uniform(6.0, 9.0);
    s.u_min = uniform(-9.0, -6.0);
    s.t_p = integer(1, hz.T - 1);
    s.t_d = integer(s.t_p + 1, hz.T);
    s.x_init = uniform(0.0, 0.4 * s.x_max);
    s.demand_fraction = uniform(0.2, 0.5);
    if (s.demand(hz) > s.x_max - s.x_init) continue;
    fleet.push_back(s);
  }
  return fleet;
}

/// True when every slot of the horizon is inside some resource's window.
inline bool covers_all_slots(const std::vector<DsrSpec>& fleet, const Horizon& hz) {
  for (int t = 1; t <= hz.T; ++t) {
    bool any = false;
    for (const auto& s : fleet) any = any || s.connected(t);
    if (!any) return false;
  }
  return true;
}

/// sample_fleet conditioned on every slot being covered; redraws whole fleets
/// with derived seeds. An uncovered slot makes every aggregate map singular.
inline std::vector<DsrSpec> sample_covering_fleet(int N, const Horizon& hz, std::uint64_t seed,
                                                  int max_draws = 1000) {
  std::uint64_t s = seed;
  for (int draw = 0; draw < max_draws; ++draw) {
    auto fleet = sample_fleet(N, hz, s);
    if (covers_all_slots(fleet, hz)) return fleet;
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
  }
  throw Error(ErrorCode::kInvalidArgument, "could not draw a fleet covering every slot");
}

inline std::vector<FacetOffsets> fleet_offsets(const std::vector<DsrSpec>& fleet, const Horizon& hz) {
  std::vector<FacetOffsets> out;
  out.reserve(fleet.size());
  for (const auto& s : fleet) out.push_back(offsets_from_spec(s, hz));
  return out;
}

/// Mean of the offset vectors (the "average" base set).
inline FacetOffsets average_offsets(const std::vector<FacetOffsets>& offsets) {
  if (offsets.empty()) throw Error(ErrorCode::kInvalidArgument, "empty offsets list");
  Vec acc = Vec::Zero(offsets.front().values.size());
  for (const auto& h : offsets) acc += h.values;
  return FacetOffsets(acc / static_cast<double>(offsets.size()));
}

/// Charge at u_max from t_p until the demand is met.
inline Vec greedy_profile(const DsrSpec& spec, const Horizon& hz) {
  Vec u = Vec::Zero(hz.T);
  double remaining = spec.demand(hz);
  for (int t = spec.t_p; t <= spec.t_d && remaining > 0.0; ++t) {
    const double p = std::min(spec.u_max, remaining / hz.dt);
    u[t - 1] = p;
    remaining -= p * hz.dt;
  }
  return u;
}

/// Test oracle: is `u` in the Minkowski sum of `polys`? Solved as the phase-one
/// LP  min s  s.t. H uᵢ − s·1 ≤ hᵢ, Σ uᵢ = u, s ≥ −1.
inline bool minkowski_membership_oracle(const std::vector<HPolytope>& polys, const Vec& u,
                                        double tol = 1e-7) {
  if (polys.empty()) throw Error(ErrorCode::kInvalidArgument, "no polytopes");
  const Horizon hz = polys.front().horizon;
  const int T = hz.T;
  const int N = static_cast<int>(polys.size());
  const Mat H = build_facet_matrix(hz);
  const int nv = N * T + 1;
  Triplets g, a;
  Vec h(N * 4 * T + 1);
  for (int i = 0; i < N; ++i) {
    for (int r = 0; r < 4 * T; ++r) {
      for (int c = 0; c < T; ++c) {
        if (H(r, c) != 0.0) g.emplace_back(i * 4 * T + r, i * T + c, H(r, c));
      }
      g.emplace_back(i * 4 * T + r, N * T, -1.0);
    }
    h.segment(i * 4 * T, 4 * T) = polys[static_cast<size_t>(i)].offsets.values;
    for (int c = 0; c < T; ++c) a.emplace_back(c, i * T + c, 1.0);
  }
  g.emplace_back(N * 4 * T, N * T, -1.0);
  h[N * 4 * T] = 1.0;
  ConeProgram lp;
  lp.c = Vec::Zero(nv);
  lp.c[N * T] = 1.0;
  lp.G.resize(N * 4 * T + 1, nv);
  lp.G.setFromTriplets(g.begin(), g.end());
  lp.A.resize(T, nv);
  lp.A.setFromTriplets(a.begin(), a.end());
  lp.b = u;
  lp.h = h;
  const PrimalDualSolution sol = solve(lp, 1e-10);
  if (!sol.optimal()) throw Error(ErrorCode::kNumericFailure, "membership LP failed");
  return sol.primal[N * T] <= tol;
}

}  // namespace flexagg
