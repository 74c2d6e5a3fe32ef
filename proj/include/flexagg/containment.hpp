#pragma once

// Largest affine image of the base set inside one resource's flexibility set:
//
//   maximize Tr(Γ)  s.t.  Λ ≥ 0,  ΛH = HΓ,  Λh₀ + Hγ ≤ hᵢ,
//
// which certifies γ + Γ·U₀(h₀) ⊆ Uᵢ. Only the diagonal of Γ is priced, so the
// optimal Γ is generally not unique; a small proximal term (ρ/2)‖Γ‖²_F picks
// the optimum of least Frobenius norm and makes Γ* a function of the data.
// Variables are laid out as
// (γ, vec Γ, vec Λ) with column-major vec; the equality rows are vec(ΛH − HΓ)
// and the inequality rows are [Λh₀ + Hγ − hᵢ ; −vec Λ]. The implicit
// differentiation in diffgrad.hpp depends on this exact ordering.

#include <random>

#include "flexagg/convex.hpp"
#include "flexagg/flexibility.hpp"

namespace flexagg {

struct AffineMap {
  Vec gamma;  // shift, length T
  Mat Gamma;  // T×T

  Vec apply(const Vec& u) const { return gamma + Gamma * u; }
};

struct ContainmentCertificate {
  AffineMap map;
  Mat Lambda;  // 4T×4T, ≥ 0
  Mat Y;       // 4T×T multipliers of ΛH = HΓ
  Vec mu;      // 4T multipliers of Λh₀ + Hγ ≤ hᵢ
  Mat nu;      // 4T×4T multipliers of Λ ≥ 0
  double objective = 0.0;  // Tr(Γ)
  double proximal = 0.0;   // ρ used by the solve
  SolveStatus status = SolveStatus::kNumericFailure;
  KktResiduals residuals;

  bool optimal() const { return status == SolveStatus::kOptimal; }
};

/// Index map for the containment LP variables and rows.
struct ContainmentLayout {
  int T;
  int m() const { return 4 * T; }
  int gamma(int t) const { return t; }
  int Gamma(int r, int c) const { return T + r + T * c; }
  int Lambda(int j, int k) const { return T + T * T + j + m() * k; }
  int num_variables() const { return T + T * T + m() * m(); }
  int eq_row(int r, int c) const { return r + m() * c; }
  int num_equalities() const { return m() * T; }
  int num_inequalities() const { return m() + m() * m(); }
};

inline constexpr double kDefaultGammaProximal = 1e-2;

inline ConeProgram build_containment_program(const FacetOffsets& h0, const FacetOffsets& hi,
                                             const Horizon& hz,
                                             double proximal = kDefaultGammaProximal) {
  const int T = hz.T;
  const ContainmentLayout L{T};
  const int m = L.m();
  if (h0.values.size() != m || hi.values.size() != m) {
    throw Error(ErrorCode::kDimensionMismatch, "offset vectors must have length 4T");
  }
  const Mat H = build_facet_matrix(hz);

  ConeProgram lp;
  lp.c = Vec::Zero(L.num_variables());
  for (int t = 0; t < T; ++t) lp.c[L.Gamma(t, t)] = -1.0;
  if (proximal > 0.0) {
    Triplets q;
    for (int i = L.Gamma(0, 0); i < L.Lambda(0, 0); ++i) q.emplace_back(i, i, proximal);
    lp.Q.resize(L.num_variables(), L.num_variables());
    lp.Q.setFromTriplets(q.begin(), q.end());
  }

  Triplets eq;
  for (int c = 0; c < T; ++c) {
    for (int r = 0; r < m; ++r) {
      const int row = L.eq_row(r, c);
      for (int k = 0; k < m; ++k) {
        if (H(k, c) != 0.0) eq.emplace_back(row, L.Lambda(r, k), H(k, c));
      }
      for (int q = 0; q < T; ++q) {
        if (H(r, q) != 0.0) eq.emplace_back(row, L.Gamma(q, c), -H(r, q));
      }
    }
  }
  lp.A.resize(L.num_equalities(), L.num_variables());
  lp.A.setFromTriplets(eq.begin(), eq.end());
  lp.b = Vec::Zero(L.num_equalities());

  Triplets in;
  for (int j = 0; j < m; ++j) {
    for (int k = 0; k < m; ++k) in.emplace_back(j, L.Lambda(j, k), h0.values[k]);
    for (int q = 0; q < T; ++q) {
      if (H(j, q) != 0.0) in.emplace_back(j, L.gamma(q), H(j, q));
    }
  }
  for (int k = 0; k < m; ++k) {
    for (int j = 0; j < m; ++j) in.emplace_back(m + j + m * k, L.Lambda(j, k), -1.0);
  }
  lp.G.resize(L.num_inequalities(), L.num_variables());
  lp.G.setFromTriplets(in.begin(), in.end());
  lp.h = Vec::Zero(L.num_inequalities());
  lp.h.head(m) = hi.values;
  return lp;
}

/// Solves the containment program for one resource. `tol` is the KKT
/// tolerance handed to the interior-point solver.
inline ContainmentCertificate solve_containment(const FacetOffsets& h0, const FacetOffsets& hi,
                                                const Horizon& hz, double tol = 1e-11,
                                                double proximal = kDefaultGammaProximal) {
  if (proximal < 0.0) throw Error(ErrorCode::kInvalidArgument, "proximal weight must be nonnegative");
  const int T = hz.T;
  const ContainmentLayout L{T};
  const int m = L.m();
  const ConeProgram lp = build_containment_program(h0, hi, hz, proximal);
  SolverOptions opts;
  opts.tol = tol;
  const PrimalDualSolution sol = solve(lp, opts);

  ContainmentCertificate cert;
  cert.proximal = proximal;
  cert.status = sol.status;
  cert.residuals = sol.residuals;
  if (!sol.optimal()) {
    const ChebyshevBall ball = chebyshev_radius(HPolytope{hz, hi});
    if (ball.radius < -1e-7) cert.status = SolveStatus::kInfeasible;
  }
  const Vec& x = sol.primal;
  cert.map.gamma = x.head(T);
  cert.map.Gamma = Eigen::Map<const Mat>(x.data() + T, T, T);
  cert.Lambda = Eigen::Map<const Mat>(x.data() + T + T * T, m, m);
  cert.Y = Eigen::Map<const Mat>(sol.eq_multipliers.data(), m, T);
  cert.mu = sol.ineq_multipliers.head(m);
  cert.nu = Eigen::Map<const Mat>(sol.ineq_multipliers.data() + m, m, m);
  cert.objective = cert.map.Gamma.trace();
  return cert;
}

/// Uniform-ish points of a bounded H-polytope by hit-and-run from its
/// Chebyshev center. Each step also yields the two chord endpoints, which
/// lie on the boundary.
class HitAndRun {
 public:
  HitAndRun(const HPolytope& poly, std::uint64_t seed)
      : H_(build_facet_matrix(poly.horizon)), h_(poly.offsets.values), rng_(seed) {
    const ChebyshevBall ball = chebyshev_radius(poly);
    x_ = ball.center;
  }

  const Vec& current() const { return x_; }

  /// Advances one step; returns the chord endpoints.
  std::pair<Vec, Vec> step() {
    std::normal_distribution<double> gauss;
    Vec d(x_.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = gauss(rng_);
    d.normalize();
    const Vec Hd = H_ * d;
    const Vec slack = h_ - H_ * x_;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < Hd.size(); ++r) {
      if (Hd[r] > 1e-14) hi = std::min(hi, slack[r] / Hd[r]);
      if (Hd[r] < -1e-14) lo = std::max(lo, slack[r] / Hd[r]);
    }
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
    const Vec a = x_ + lo * d;
    const Vec b = x_ + hi * d;
    x_ += std::uniform_real_distribution<double>(lo, hi)(rng_) * d;
    return {a, b};
  }

 private:
  Mat H_;
  Vec h_;
  std::mt19937_64 rng_;
  Vec x_;
};

/// Sampling check that γ + Γ·U₀(h0) ⊆ Uᵢ: `samples` hit-and-run points of
/// U₀ plus their chord endpoints are mapped and tested against hᵢ.
inline bool verify_containment(const FacetOffsets& h0, const FacetOffsets& hi, const Horizon& hz,
                               const AffineMap& map, int samples, std::uint64_t seed,
                               double tol = 1e-7) {
  const Mat H = build_facet_matrix(hz);
  auto inside = [&](const Vec& u) { return (H * map.apply(u) - hi.values).maxCoeff() <= tol; };
  HitAndRun walker(HPolytope{hz, h0}, seed);
  if (!inside(walker.current())) return false;
  for (int s = 0; s < samples; ++s) {
    const auto [a, b] = walker.step();
    if (!inside(a) || !inside(b) || !inside(walker.current())) return false;
  }
  return true;
}

}  // namespace flexagg
