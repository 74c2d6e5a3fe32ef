#pragma once

// Volume of U₀(h) and its gradient by nested one-dimensional integration over
// the cumulative energy x(t) = Δt·Σ_{τ≤t} u(τ):
//
//   R_t(x) = ∫ R_{t−1}(y) · I{a_t(y) ≤ x < b_t(y)} dy,   R_0 = δ,
//   a_t(y) = max(y + u̲(t)Δt, x̲(t)),  b_t(y) = min(y + ū(t)Δt, x̄(t)),
//
// discretized on cells of width Δx covering the intervals
// I_t = [max(x̲(t), Σu̲Δt), min(x̄(t), ΣūΔt)]. Each table holds cell averages;
// the mass of a source cell is spread over the target cells by their exact
// overlap with [a_t(y), b_t(y)), which keeps the estimate continuous in h.
// The x-space integral is divided by Δt^T to give the u-space volume.
//
// Every table is stored normalized to unit maximum with its log scale kept
// separately, so volumes far below the double range stay representable.
//
// For the gradient, the tail mass B_t(x) (volume of continuations from state x
// at level t) is tabulated backwards; each facet derivative is a boundary term
// of the level-t integral weighted by B_t at the moving bound.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "flexagg/error.hpp"
#include "flexagg/flexibility.hpp"

namespace flexagg {

struct VolumeGrid {
  double dx = 0.0;
  Vec lo, hi;             // I_t
  std::vector<int> count;  // K_t

  double point(int t, int k) const { return lo[t] + (k + 0.5) * dx; }
};

/// R̂_t on the grid of I_t: R̂_t(x_k) = values[t][k] · exp(log_scale[t]).
struct MassTables {
  VolumeGrid grid;
  std::vector<Vec> values;
  std::vector<double> log_scale;

  bool empty() const { return values.empty(); }
};

struct VolumeEstimate {
  double vol = 0.0;
  double log_vol = -std::numeric_limits<double>::infinity();
  MassTables tables;
};

namespace detail {

struct LevelBounds {
  double x_lo, x_hi, u_lo, u_hi, dt;

  double a(double y) const { return std::max(y + u_lo * dt, x_lo); }
  double b(double y) const { return std::min(y + u_hi * dt, x_hi); }
};

inline std::vector<LevelBounds> level_bounds(const FacetOffsets& h, const Horizon& hz) {
  std::vector<LevelBounds> out(static_cast<size_t>(hz.T));
  const Vec xu = h.x_upper(), xl = h.x_lower(), uu = h.u_upper(), ul = h.u_lower();
  for (int t = 0; t < hz.T; ++t) out[static_cast<size_t>(t)] = {xl[t], xu[t], ul[t], uu[t], hz.dt};
  return out;
}

/// Rescales `v` to unit maximum; returns log of the factor, or −∞ when v ≡ 0.
inline double normalize(Vec& v) {
  const double m = v.size() == 0 ? 0.0 : v.maxCoeff();
  if (!(m > 0.0)) return -std::numeric_limits<double>::infinity();
  v /= m;
  return std::log(m);
}

/// ∫_a^b f̂ for the piecewise-constant f̂ with value f[k] on
/// [lo + kΔx, lo + (k+1)Δx) and zero outside.
inline double cell_integral(const Vec& f, double lo, double dx, double a, double b) {
  if (!(b > a)) return 0.0;
  const Eigen::Index K = f.size();
  const Eigen::Index k0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor((a - lo) / dx)));
  const Eigen::Index k1 = std::min<Eigen::Index>(K - 1, static_cast<Eigen::Index>(std::floor((b - lo) / dx)));
  double s = 0.0;
  for (Eigen::Index k = k0; k <= k1; ++k) {
    const double c0 = lo + static_cast<double>(k) * dx;
    const double w = std::min(b, c0 + dx) - std::max(a, c0);
    if (w > 0.0) s += w * f[k];
  }
  return s;
}

/// Adds w·|[a, b) ∩ cell k| to r[k] for every cell.
inline void deposit(Vec& r, double lo, double dx, double a, double b, double w) {
  if (!(b > a)) return;
  const Eigen::Index K = r.size();
  const Eigen::Index k0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor((a - lo) / dx)));
  const Eigen::Index k1 = std::min<Eigen::Index>(K - 1, static_cast<Eigen::Index>(std::floor((b - lo) / dx)));
  for (Eigen::Index k = k0; k <= k1; ++k) {
    const double c0 = lo + static_cast<double>(k) * dx;
    const double ov = std::min(b, c0 + dx) - std::max(a, c0);
    if (ov > 0.0) r[k] += w * ov;
  }
}

}  // namespace detail

/// Sampling intervals I_t with step `dx`. Returns an empty grid (dx = 0) when
/// some I_t has no interior.
inline VolumeGrid make_volume_grid_with_step(const FacetOffsets& h, const Horizon& hz, double dx) {
  if (h.values.size() != hz.num_facets()) throw Error(ErrorCode::kDimensionMismatch, "offsets must have length 4T");
  if (!(dx > 0.0)) throw Error(ErrorCode::kInvalidArgument, "grid step must be positive");
  VolumeGrid g;
  g.lo.resize(hz.T);
  g.hi.resize(hz.T);
  const Vec xu = h.x_upper(), xl = h.x_lower(), uu = h.u_upper(), ul = h.u_lower();
  double cum_lo = 0.0, cum_hi = 0.0;
  for (int t = 0; t < hz.T; ++t) {
    cum_lo += ul[t] * hz.dt;
    cum_hi += uu[t] * hz.dt;
    g.lo[t] = std::max(xl[t], cum_lo);
    g.hi[t] = std::min(xu[t], cum_hi);
    if (!(g.hi[t] > g.lo[t])) return VolumeGrid{};
  }
  g.dx = dx;
  g.count.resize(static_cast<size_t>(hz.T));
  for (int t = 0; t < hz.T; ++t) {
    g.count[static_cast<size_t>(t)] = std::max(1, static_cast<int>(std::ceil((g.hi[t] - g.lo[t]) / dx - 1e-12)));
  }
  return g;
}

/// Step max_t |I_t| / grid_points.
inline VolumeGrid make_volume_grid(const FacetOffsets& h, const Horizon& hz, int grid_points = 200) {
  if (grid_points < 1) throw Error(ErrorCode::kInvalidArgument, "grid_points must be positive");
  VolumeGrid probe = make_volume_grid_with_step(h, hz, 1.0);
  if (!(probe.dx > 0.0)) return probe;
  const double widest = (probe.hi - probe.lo).maxCoeff();
  return make_volume_grid_with_step(h, hz, widest / grid_points);
}

inline VolumeEstimate volume_estimate(const FacetOffsets& h, const Horizon& hz, const VolumeGrid& grid) {
  VolumeEstimate out;
  if (!(grid.dx > 0.0)) return out;
  const auto lv = detail::level_bounds(h, hz);
  MassTables tab;
  tab.grid = grid;
  const double dx = grid.dx;

  // Level 1 from the point mass at x(0) = 0.
  {
    Vec r = Vec::Zero(grid.count[0]);
    detail::deposit(r, grid.lo[0], dx, lv[0].a(0.0), lv[0].b(0.0), 1.0 / dx);
    const double ls = detail::normalize(r);
    if (!std::isfinite(ls)) return out;
    tab.values.push_back(std::move(r));
    tab.log_scale.push_back(ls);
  }
  for (int t = 1; t < hz.T; ++t) {
    const Vec& prev = tab.values.back();
    Vec r = Vec::Zero(grid.count[static_cast<size_t>(t)]);
    const detail::LevelBounds& L = lv[static_cast<size_t>(t)];
    for (Eigen::Index j = 0; j < prev.size(); ++j) {
      if (prev[j] == 0.0) continue;
      const double y = grid.point(t - 1, static_cast<int>(j));
      detail::deposit(r, grid.lo[t], dx, L.a(y), L.b(y), prev[j]);
    }
    const double ls = detail::normalize(r);
    if (!std::isfinite(ls)) return VolumeEstimate{};
    tab.values.push_back(std::move(r));
    tab.log_scale.push_back(tab.log_scale.back() + ls);
  }
  const double sum = tab.values.back().sum() * dx;
  out.log_vol = tab.log_scale.back() + std::log(sum) - hz.T * std::log(hz.dt);
  out.vol = std::exp(out.log_vol);
  out.tables = std::move(tab);
  return out;
}

inline VolumeEstimate volume_estimate(const FacetOffsets& h, const Horizon& hz, int grid_points = 200) {
  return volume_estimate(h, hz, make_volume_grid(h, hz, grid_points));
}

struct VolumeGradient {
  Vec d_vol;      // ∂vol/∂h
  Vec d_log_vol;  // ∂log vol/∂h
};

/// ∂vol/∂h for all 4T offsets, reusing the forward tables of `est`.
inline VolumeGradient volume_gradient(const FacetOffsets& h, const Horizon& hz, const VolumeEstimate& est) {
  const int T = hz.T;
  VolumeGradient out{Vec::Zero(4 * T), Vec::Zero(4 * T)};
  if (est.tables.empty()) return out;
  const MassTables& tab = est.tables;
  const VolumeGrid& grid = tab.grid;
  const double dx = grid.dx;
  const auto lv = detail::level_bounds(h, hz);

  // Tail tables: B_{T−1} ≡ 1, B_t(y) = ∫ I{a_{t+1}(y) ≤ x < b_{t+1}(y)} B_{t+1}(x) dx.
  std::vector<Vec> tail(static_cast<size_t>(T));
  std::vector<double> tail_log(static_cast<size_t>(T), 0.0);
  tail[static_cast<size_t>(T - 1)] = Vec::Ones(grid.count[static_cast<size_t>(T - 1)]);
  auto tail_at = [&](int t, double y) {
    if (t == T - 1) return 1.0;
    const detail::LevelBounds& L = lv[static_cast<size_t>(t + 1)];
    return detail::cell_integral(tail[static_cast<size_t>(t + 1)], grid.lo[t + 1], dx, L.a(y), L.b(y));
  };
  for (int t = T - 2; t >= 0; --t) {
    Vec b(grid.count[static_cast<size_t>(t)]);
    for (int k = 0; k < b.size(); ++k) b[k] = tail_at(t, grid.point(t, k));
    double ls = detail::normalize(b);
    if (!std::isfinite(ls)) ls = 0.0;
    tail[static_cast<size_t>(t)] = std::move(b);
    tail_log[static_cast<size_t>(t)] = tail_log[static_cast<size_t>(t + 1)] + ls;
  }

  // Predecessor states of level t: grid of level t−1 with R̂ weights·Δx, or
  // the point mass at 0 for the first level.
  for (int t = 0; t < T; ++t) {
    std::vector<double> ys, ws;
    double log_w = 0.0;
    if (t == 0) {
      ys.push_back(0.0);
      ws.push_back(1.0);
    } else {
      const Vec& prev = tab.values[static_cast<size_t>(t - 1)];
      for (int j = 0; j < prev.size(); ++j) {
        if (prev[j] == 0.0) continue;
        ys.push_back(grid.point(t - 1, j));
        ws.push_back(prev[j] * dx);
      }
      log_w = tab.log_scale[static_cast<size_t>(t - 1)];
    }
    const detail::LevelBounds& L = lv[static_cast<size_t>(t)];
    double s_xu = 0.0, s_xl = 0.0, g_uu = 0.0, g_ul = 0.0;
    for (size_t j = 0; j < ys.size(); ++j) {
      const double y = ys[j];
      if (!(L.a(y) < L.b(y))) continue;
      if (L.x_hi < y + L.u_hi * L.dt) s_xu += ws[j];
      else g_uu += ws[j] * tail_at(t, y + L.u_hi * L.dt);
      if (L.x_lo > y + L.u_lo * L.dt) s_xl += ws[j];
      else g_ul += ws[j] * tail_at(t, y + L.u_lo * L.dt);
    }
    // Boundary weights in x-space; the sign of the −x̲ and −u̲ entries makes all
    // four derivatives nonnegative.
    const double tail_scale = t == T - 1 ? 0.0 : tail_log[static_cast<size_t>(t + 1)];
    const double scale = log_w + tail_scale - hz.T * std::log(hz.dt) - est.log_vol;
    const double f = std::exp(scale);
    out.d_log_vol[t] = f * s_xu * tail_at(t, L.x_hi);
    out.d_log_vol[T + t] = f * s_xl * tail_at(t, L.x_lo);
    out.d_log_vol[2 * T + t] = f * L.dt * g_uu;
    out.d_log_vol[3 * T + t] = f * L.dt * g_ul;
  }
  out.d_vol = est.vol * out.d_log_vol;
  return out;
}

struct MonteCarloVolume {
  double vol = 0.0;
  double standard_error = 0.0;
};

/// Hit-and-miss estimate over the box ∏[u̲(t), ū(t)].
inline MonteCarloVolume volume_oracle_mc(const FacetOffsets& h, const Horizon& hz, int samples,
                                         std::uint64_t seed) {
  const Vec lo = h.u_lower(), hi = h.u_upper();
  if (!lo.allFinite() || !hi.allFinite()) throw Error(ErrorCode::kInvalidArgument, "unbounded power box");
  double box = 1.0;
  for (int t = 0; t < hz.T; ++t) box *= std::max(hi[t] - lo[t], 0.0);
  MonteCarloVolume out;
  if (box == 0.0 || samples <= 0) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Mat H = build_facet_matrix(hz);
  Vec u(hz.T);
  long hits = 0;
  for (int s = 0; s < samples; ++s) {
    for (int t = 0; t < hz.T; ++t) u[t] = lo[t] + (hi[t] - lo[t]) * unit(rng);
    if (((H * u).array() <= h.values.array()).all()) ++hits;
  }
  const double p = static_cast<double>(hits) / samples;
  out.vol = box * p;
  out.standard_error = box * std::sqrt(p * (1.0 - p) / samples);
  return out;
}

}  // namespace flexagg
