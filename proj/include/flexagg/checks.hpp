#pragma once

// Self-checks shared by the CLI and the acceptance driver: analytic
// Jacobians against central differences, and the volume estimator against
// closed forms and Monte Carlo.

#include <chrono>
#include <random>
#include <string>
#include <vector>

#include "flexagg/containment.hpp"
#include "flexagg/diffgrad.hpp"
#include "flexagg/projection.hpp"
#include "flexagg/volume.hpp"

namespace flexagg {

struct GradientInstanceReport {
  std::string kind;  // "projection" or "containment"
  int T = 0;
  JacobianSolve solve = JacobianSolve::kDirect;
  int compared = 0;
  int passed = 0;
  double max_rel_error = 0.0;
};

struct GradientCheckSummary {
  std::vector<GradientInstanceReport> instances;
  double seconds = 0.0;

  int compared() const {
    int n = 0;
    for (const auto& r : instances) n += r.compared;
    return n;
  }
  int passed() const {
    int n = 0;
    for (const auto& r : instances) n += r.passed;
    return n;
  }
  double pass_fraction() const { return compared() == 0 ? 1.0 : static_cast<double>(passed()) / compared(); }
};

struct GradientCheckOptions {
  int instances = 20;
  std::uint64_t seed = 1000;
  double step = 1e-5;
  double tol = 1e-3;
  double floor = 1e-8;
};

/// Instance k has T = 2 + k mod 3. The projection check starts from offsets
/// in U(−0.5, 1.5), so some facets are pushed; the containment check uses a
/// projected base from U(0.5, 1.5) against a participant 2·U(0.5, 1.5).
inline GradientCheckSummary run_gradient_checks(const GradientCheckOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  GradientCheckSummary out;
  for (int k = 0; k < opts.instances; ++k) {
    const int T = 2 + k % 3;
    const Horizon hz(T, 1.0);
    const int m = 4 * T;
    std::mt19937_64 rng(opts.seed + static_cast<std::uint64_t>(k));
    std::uniform_real_distribution<double> wide(-0.5, 1.5), unit(0.5, 1.5);
    Vec raw(m), a(m), b(m);
    for (int j = 0; j < m; ++j) raw[j] = wide(rng);
    for (int j = 0; j < m; ++j) {
      a[j] = unit(rng);
      b[j] = 2.0 * unit(rng);
    }

    {
      const double eps = default_epsilon(FacetOffsets(raw));
      const ProjectedBase pb = project(FacetOffsets(raw), eps, hz);
      const ProjectionJacobian pj = projection_gradient(pb, hz);
      auto f = [&](const Vec& h) { return project(FacetOffsets(h), eps, hz).h_tilde.values; };
      const FdReport rep = finite_difference_check(f, raw, pj.d_htilde_d_h0, opts.step, opts.tol,
                                                   complementarity_margin(pb), 1e-6, opts.floor);
      out.instances.push_back({"projection", T, pj.solve_kind, rep.compared, rep.passed, rep.max_rel_error});
    }
    {
      const FacetOffsets h0 = project(FacetOffsets(a), hz).h_tilde;
      const FacetOffsets hi(b);
      const ContainmentCertificate cert = solve_containment(h0, hi, hz);
      const ContainmentJacobian jac = containment_gradient(cert, h0, hi, hz);
      auto f = [&](const Vec& h) { return vec(solve_containment(FacetOffsets(h), hi, hz).map.Gamma); };
      const FdReport rep = finite_difference_check(f, h0.values, flatten(jac), opts.step, opts.tol,
                                                   complementarity_margin(cert, h0, hi, hz), 1e-6, opts.floor);
      out.instances.push_back({"containment", T, jac.solve_kind, rep.compared, rep.passed, rep.max_rel_error});
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

struct VolumeFixtureReport {
  std::string name;
  double estimate = 0.0;
  double exact = 0.0;
  double rel_error() const { return std::abs(estimate - exact) / exact; }
};

struct VolumeMcReport {
  int T = 0;
  double estimate = 0.0;
  double mc = 0.0;
  double standard_error = 0.0;
  double tolerance() const { return std::max(3.0 * standard_error, 0.03 * mc); }
  bool ok() const { return std::abs(estimate - mc) <= tolerance(); }
};

struct VolumeCheckSummary {
  std::vector<VolumeFixtureReport> fixtures;
  std::vector<VolumeMcReport> mc;
  int gradient_compared = 0;  // active coordinates
  int gradient_passed = 0;
  double gradient_max_rel_error = 0.0;
  double seconds = 0.0;

  bool fixtures_ok(double tol = 0.02) const {
    for (const auto& f : fixtures) {
      if (!(f.rel_error() <= tol)) return false;
    }
    return true;
  }
  bool mc_ok() const {
    for (const auto& r : mc) {
      if (!r.ok()) return false;
    }
    return true;
  }
  bool gradient_ok() const { return gradient_passed == gradient_compared; }
};

struct VolumeCheckOptions {
  int instances = 20;
  std::uint64_t seed = 2000;
  int grid_points = 200;
  int gradient_grid_points = 800;
  int mc_samples = 400000;
  double gradient_tol = 0.02;
  double active_fraction = 0.05;  // |∂vol/∂h_j| ≥ this · max_j |∂vol/∂h_j|
  double fd_cells = 10.0;         // FD step in grid cells
};

/// Random bounded offsets: power bounds in ±U(0.3, 1), energy bounds a
/// random band around the midpoint trajectory.
inline FacetOffsets random_volume_instance(const Horizon& hz, std::mt19937_64& rng) {
  const int T = hz.T;
  std::uniform_real_distribution<double> U(0.3, 1.0);
  Vec ul(T), uu(T), xl(T), xu(T);
  double c = 0.0;
  for (int t = 0; t < T; ++t) {
    ul[t] = -U(rng);
    uu[t] = U(rng);
    c += 0.5 * (uu[t] + ul[t]) * hz.dt;
    xu[t] = c + 0.5 * U(rng) * (t + 1) * hz.dt;
    xl[t] = c - 0.5 * U(rng) * (t + 1) * hz.dt;
  }
  return FacetOffsets::from_bounds(xu, xl, uu, ul);
}

inline VolumeCheckSummary run_volume_checks(const VolumeCheckOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  VolumeCheckSummary out;
  {
    const Horizon hz(3, 1.0);
    const FacetOffsets box = box_offsets(hz, Vec::Zero(3), Vec::Ones(3));
    out.fixtures.push_back({"unit box T=3", volume_estimate(box, hz, opts.grid_points).vol, 1.0});
  }
  {
    // u ∈ [0,1]², u1 + u2 ≤ 1.5: the unit square minus a corner of area 1/8.
    const Horizon hz(2, 1.0);
    Vec xu(2), xl(2);
    xu << 10.0, 1.5;
    xl << -10.0, -10.0;
    const FacetOffsets cut = FacetOffsets::from_bounds(xu, xl, Vec::Ones(2), Vec::Zero(2));
    out.fixtures.push_back({"corner cut T=2", volume_estimate(cut, hz, opts.grid_points).vol, 0.875});
  }
  for (int k = 0; k < opts.instances; ++k) {
    const int T = 2 + k % 3;
    const Horizon hz(T, k % 2 == 0 ? 1.0 : 0.5);
    std::mt19937_64 rng(opts.seed + static_cast<std::uint64_t>(k));
    const FacetOffsets h = random_volume_instance(hz, rng);
    const VolumeEstimate est = volume_estimate(h, hz, opts.grid_points);
    const MonteCarloVolume mc = volume_oracle_mc(h, hz, opts.mc_samples, opts.seed * 31 + static_cast<std::uint64_t>(k));
    out.mc.push_back({T, est.vol, mc.vol, mc.standard_error});

    const VolumeEstimate fine = volume_estimate(h, hz, opts.gradient_grid_points);
    const VolumeGradient g = volume_gradient(h, hz, fine);
    const double dx = fine.tables.grid.dx;
    const double step = opts.fd_cells * dx;
    const double gmax = g.d_vol.cwiseAbs().maxCoeff();
    for (int j = 0; j < 4 * T; ++j) {
      if (std::abs(g.d_vol[j]) < opts.active_fraction * gmax) continue;
      Vec hp = h.values, hm = h.values;
      hp[j] += step;
      hm[j] -= step;
      const FacetOffsets fp(hp), fm(hm);
      const double vp = volume_estimate(fp, hz, make_volume_grid_with_step(fp, hz, dx)).vol;
      const double vm = volume_estimate(fm, hz, make_volume_grid_with_step(fm, hz, dx)).vol;
      const double fd = (vp - vm) / (2.0 * step);
      const double rel = std::abs(g.d_vol[j] - fd) / std::max(std::abs(fd), 1e-300);
      ++out.gradient_compared;
      if (rel <= opts.gradient_tol) ++out.gradient_passed;
      out.gradient_max_rel_error = std::max(out.gradient_max_rel_error, rel);
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace flexagg
