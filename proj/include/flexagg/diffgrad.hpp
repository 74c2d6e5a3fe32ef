#pragma once

// Sensitivities of the projection QP and the containment LP with respect to
// the base offsets, by the implicit function theorem applied to the KKT
// residual maps:  ∂z/∂θ = −J⁻¹ ∂F/∂θ.
//
// Interior-point solutions are purified first: in each complementarity pair
// the smaller member is set to zero. The resulting Jacobians are singular
// whenever the primal optimum is not unique (free u in the projection, slack
// rows of Λ in containment); the systems stay consistent, so a sparse LU is
// tried first and a minimum-norm least-squares solve by iterated Tikhonov
// regularization is the fallback.

#include <functional>
#include <vector>

#include "flexagg/containment.hpp"
#include "flexagg/convex.hpp"
#include "flexagg/projection.hpp"

namespace flexagg {

/// Kronecker product of sparse matrices.
inline SpMat kron(const SpMat& a, const SpMat& b) {
  Triplets trips;
  trips.reserve(static_cast<size_t>(a.nonZeros() * b.nonZeros()));
  for (int ka = 0; ka < a.outerSize(); ++ka) {
    for (SpMat::InnerIterator ia(a, ka); ia; ++ia) {
      for (int kb = 0; kb < b.outerSize(); ++kb) {
        for (SpMat::InnerIterator ib(b, kb); ib; ++ib) {
          trips.emplace_back(ia.row() * b.rows() + ib.row(), ia.col() * b.cols() + ib.col(),
                             ia.value() * ib.value());
        }
      }
    }
  }
  SpMat out(a.rows() * b.rows(), a.cols() * b.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

inline Vec vec(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

// ---------------------------------------------------------------------------
// Projection

struct ProjectionJacobian {
  Mat d_htilde_d_h0;  // 4T×4T
  JacobianSolve solve_kind = JacobianSolve::kDirect;
};

/// Smallest |λ_j| + |g_j| over the complementarity pairs.
inline double complementarity_margin(const ProjectedBase& sol) {
  return (sol.lambda.cwiseAbs() + sol.g.cwiseAbs()).minCoeff();
}

/// Assembles J_y in y = (h0′, u, λ):
///   [ −2I        0          I       ]
///   [  0         0          Hᵀ      ]
///   [ −diag λ    diag(λ)H   diag g  ]
inline SpMat projection_kkt_jacobian(const ProjectedBase& sol, const Horizon& hz) {
  const int T = hz.T;
  const int m = 4 * T;
  const Mat H = build_facet_matrix(hz);
  Vec lambda = sol.lambda, g = sol.g;
  for (int j = 0; j < m; ++j) {
    if (lambda[j] > std::abs(g[j])) g[j] = 0.0;
    else lambda[j] = 0.0;
  }
  Triplets trips;
  for (int j = 0; j < m; ++j) {
    trips.emplace_back(j, j, -2.0);
    trips.emplace_back(j, m + T + j, 1.0);
  }
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < m; ++j) {
      if (H(j, t) != 0.0) trips.emplace_back(m + t, m + T + j, H(j, t));
    }
  }
  const int r0 = m + T;
  for (int j = 0; j < m; ++j) {
    if (lambda[j] != 0.0) {
      trips.emplace_back(r0 + j, j, -lambda[j]);
      for (int t = 0; t < T; ++t) {
        if (H(j, t) != 0.0) trips.emplace_back(r0 + j, m + t, lambda[j] * H(j, t));
      }
    }
    if (g[j] != 0.0) trips.emplace_back(r0 + j, r0 + j, g[j]);
  }
  SpMat J(2 * m + T, 2 * m + T);
  J.setFromTriplets(trips.begin(), trips.end());
  return J;
}

inline ProjectionJacobian projection_gradient(const ProjectedBase& sol, const Horizon& hz) {
  const int T = hz.T;
  const int m = 4 * T;
  if (sol.lambda.size() != m) throw Error(ErrorCode::kDimensionMismatch, "projection solution has wrong size");
  const SpMat J = projection_kkt_jacobian(sol, hz);
  Mat rhs = Mat::Zero(2 * m + T, m);
  rhs.topRows(m) = -2.0 * Mat::Identity(m, m);
  const LinearSolveResult res = solve_kkt_jacobian(J, rhs);
  ProjectionJacobian out;
  out.solve_kind = res.kind;
  out.d_htilde_d_h0 = res.x.topRows(m);
  return out;
}

// ---------------------------------------------------------------------------
// Containment

/// ∂Γ*/∂h̃ as 4T slices of T×T, plus ∂γ*/∂h̃ (T×4T).
struct ContainmentJacobian {
  std::vector<Mat> d_Gamma;
  Mat d_gamma;
  JacobianSolve solve_kind = JacobianSolve::kDirect;
  double relative_residual = 0.0;

  bool usable() const { return solve_kind != JacobianSolve::kSingular; }
};

/// Smallest |μ_j| + |g_j| and |ν_jk| + |Λ_jk| over all complementarity pairs.
inline double complementarity_margin(const ContainmentCertificate& cert, const FacetOffsets& h0,
                                     const FacetOffsets& hi, const Horizon& hz) {
  const Mat H = build_facet_matrix(hz);
  const Vec g = cert.Lambda * h0.values + H * cert.map.gamma - hi.values;
  const double a = (cert.mu.cwiseAbs() + g.cwiseAbs()).minCoeff();
  const double b = (cert.nu.cwiseAbs() + cert.Lambda.cwiseAbs()).minCoeff();
  return std::min(a, b);
}

/// Block layout of z = [γ, vec Γ, vec Λ, vec Y, μ, vec ν].
struct ContainmentKktLayout {
  int T;
  int m() const { return 4 * T; }
  int gamma() const { return 0; }
  int Gamma() const { return T; }
  int Lambda() const { return T + T * T; }
  int Y() const { return Lambda() + m() * m(); }
  int mu() const { return Y() + m() * T; }
  int nu() const { return mu() + m(); }
  int size() const { return nu() + m() * m(); }
};

namespace detail {

inline void append_block(Triplets& trips, const SpMat& block, int row0, int col0) {
  for (int k = 0; k < block.outerSize(); ++k) {
    for (SpMat::InnerIterator it(block, k); it; ++it) {
      trips.emplace_back(row0 + it.row(), col0 + it.col(), it.value());
    }
  }
}

inline SpMat sparse_diag(const Vec& d) {
  SpMat out(d.size(), d.size());
  Triplets trips;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d[i] != 0.0) trips.emplace_back(i, i, d[i]);
  }
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

}  // namespace detail

/// The purified multipliers and slacks that enter J_z.
struct PurifiedCertificate {
  Vec mu, g, nu, lambda;  // nu and lambda as vec(·)
  int weak_pairs = 0;     // pairs with neither member clearly zero
};

namespace detail {

/// Zeroes the smaller member of a complementarity pair; a pair whose smaller
/// member is within `ratio` of the larger is weakly active and both go to zero.
inline bool purify_pair(double& a, double& b, double ratio) {
  const double lo = std::min(std::abs(a), std::abs(b));
  const double hi = std::max(std::abs(a), std::abs(b));
  if (lo > ratio * hi) {
    a = 0.0;
    b = 0.0;
    return true;
  }
  if (std::abs(a) > std::abs(b)) b = 0.0;
  else a = 0.0;
  return false;
}

}  // namespace detail

inline PurifiedCertificate purify(const ContainmentCertificate& cert, const FacetOffsets& h0,
                                  const FacetOffsets& hi, const Horizon& hz, double ratio = 1e-4) {
  const Mat H = build_facet_matrix(hz);
  PurifiedCertificate p;
  p.mu = cert.mu;
  p.g = cert.Lambda * h0.values + H * cert.map.gamma - hi.values;
  p.nu = vec(cert.nu);
  p.lambda = vec(cert.Lambda);
  for (Eigen::Index j = 0; j < p.mu.size(); ++j) {
    if (detail::purify_pair(p.mu[j], p.g[j], ratio)) ++p.weak_pairs;
  }
  for (Eigen::Index j = 0; j < p.nu.size(); ++j) {
    if (detail::purify_pair(p.nu[j], p.lambda[j], ratio)) ++p.weak_pairs;
  }
  return p;
}

/// J_z with its twelve nonzero blocks (thirteen with a proximal ρ), rows
/// ordered as the residual blocks
/// [Hᵀμ; −vec I + ρ vec Γ − (I⊗Hᵀ)vec Y; (H⊗I)vec Y + (h0⊗I)μ − vec ν;
///  (Hᵀ⊗I)vec Λ − (I⊗H)vec Γ; μ∘g; vec ν ∘ vec Λ].
inline SpMat containment_kkt_jacobian(const PurifiedCertificate& p, const FacetOffsets& h0,
                                      const Horizon& hz, double proximal = 0.0) {
  const int T = hz.T;
  const ContainmentKktLayout z{T};
  const int m = z.m();
  const SpMat H = to_sparse(build_facet_matrix(hz));
  const SpMat Ht = H.transpose();
  const SpMat It = sparse_identity(T);
  const SpMat Im = sparse_identity(m);
  const SpMat h0col = to_sparse(h0.values);
  const SpMat Dmu = detail::sparse_diag(p.mu);

  const int r1 = 0, r2 = T, r3 = T + T * T, r4 = r3 + m * m, r5 = r4 + m * T, r6 = r5 + m;

  Triplets trips;
  detail::append_block(trips, Ht, r1, z.mu());
  if (proximal > 0.0) detail::append_block(trips, proximal * sparse_identity(T * T), r2, z.Gamma());
  detail::append_block(trips, -kron(It, Ht), r2, z.Y());
  detail::append_block(trips, kron(H, Im), r3, z.Y());
  detail::append_block(trips, kron(h0col, Im), r3, z.mu());
  detail::append_block(trips, -sparse_identity(m * m), r3, z.nu());
  detail::append_block(trips, -kron(It, H), r4, z.Gamma());
  detail::append_block(trips, kron(Ht, Im), r4, z.Lambda());
  detail::append_block(trips, Dmu * H, r5, z.gamma());
  detail::append_block(trips, Dmu * kron(SpMat(h0col.transpose()), Im), r5, z.Lambda());
  detail::append_block(trips, detail::sparse_diag(p.g), r5, z.mu());
  detail::append_block(trips, detail::sparse_diag(p.nu), r6, z.Lambda());
  detail::append_block(trips, detail::sparse_diag(p.lambda), r6, z.nu());
  SpMat J(z.size(), z.size());
  J.setFromTriplets(trips.begin(), trips.end());
  return J;
}

/// ∂G/∂h0: nonzero only in the Λ-stationarity block (I ⊗ μ) and the μ∘g
/// block (diag(μ) Λ).
inline Mat containment_kkt_rhs(const PurifiedCertificate& p, const ContainmentCertificate& cert,
                               const Horizon& hz) {
  const int T = hz.T;
  const ContainmentKktLayout z{T};
  const int m = z.m();
  const int r3 = T + T * T, r5 = r3 + m * m + m * T;
  Mat rhs = Mat::Zero(z.size(), m);
  for (int k = 0; k < m; ++k) rhs.block(r3 + m * k, k, m, 1) = p.mu;
  rhs.block(r5, 0, m, m) = p.mu.asDiagonal() * Eigen::Map<const Mat>(p.lambda.data(), m, m);
  return rhs;
}

inline ContainmentJacobian containment_gradient(const ContainmentCertificate& cert, const FacetOffsets& h0,
                                                const FacetOffsets& hi, const Horizon& hz) {
  const int T = hz.T;
  const int m = 4 * T;
  if (h0.values.size() != m || hi.values.size() != m || cert.Lambda.rows() != m) {
    throw Error(ErrorCode::kDimensionMismatch, "containment gradient inputs have inconsistent sizes");
  }
  const PurifiedCertificate p = purify(cert, h0, hi, hz);
  const SpMat J = containment_kkt_jacobian(p, h0, hz, cert.proximal);
  const Mat rhs = containment_kkt_rhs(p, cert, hz);
  const LinearSolveResult res = solve_kkt_jacobian(J, -rhs);
  ContainmentJacobian out;
  out.solve_kind = res.kind;
  out.relative_residual = res.relative_residual;
  out.d_gamma = res.x.topRows(T);
  out.d_Gamma.resize(static_cast<size_t>(m));
  for (int f = 0; f < m; ++f) {
    out.d_Gamma[static_cast<size_t>(f)] = Eigen::Map<const Mat>(Vec(res.x.block(T, f, T * T, 1)).data(), T, T);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference validation

struct FdReport {
  double max_rel_error = 0.0;
  int compared = 0;               // coordinates with |FD| above the floor
  int passed = 0;
  std::vector<Eigen::Index> failing;  // column-major indices into the analytic matrix
  bool unreliable = false;        // complementarity margin below threshold
  double pass_fraction() const { return compared == 0 ? 1.0 : static_cast<double>(passed) / compared; }
  bool pass() const { return !unreliable && failing.empty(); }
};

/// Central differences of `f` at `x0` against `analytic` (outputs × inputs).
/// A coordinate passes when |a − fd| ≤ tol·|fd|; coordinates with |fd| ≤
/// `floor` are skipped. `margin` below `margin_threshold` flags the instance.
inline FdReport finite_difference_check(const std::function<Vec(const Vec&)>& f, const Vec& x0,
                                        const Mat& analytic, double step, double tol,
                                        double margin = 1.0, double margin_threshold = 1e-6,
                                        double floor = 1e-8) {
  FdReport rep;
  rep.unreliable = margin < margin_threshold;
  for (Eigen::Index j = 0; j < x0.size(); ++j) {
    Vec xp = x0, xm = x0;
    xp[j] += step;
    xm[j] -= step;
    const Vec fd = (f(xp) - f(xm)) / (2.0 * step);
    if (fd.size() != analytic.rows()) throw Error(ErrorCode::kDimensionMismatch, "analytic rows ≠ f output");
    for (Eigen::Index i = 0; i < fd.size(); ++i) {
      if (std::abs(fd[i]) <= floor) continue;
      ++rep.compared;
      const double err = std::abs(analytic(i, j) - fd[i]) / std::abs(fd[i]);
      rep.max_rel_error = std::max(rep.max_rel_error, err);
      if (err <= tol) ++rep.passed;
      else rep.failing.push_back(i + j * analytic.rows());
    }
  }
  return rep;
}

/// Flattens ∂Γ/∂h̃ into a T²×4T matrix (column f is vec of slice f).
inline Mat flatten(const ContainmentJacobian& jac) {
  const Eigen::Index T2 = jac.d_Gamma.empty() ? 0 : jac.d_Gamma.front().size();
  Mat out(T2, static_cast<Eigen::Index>(jac.d_Gamma.size()));
  for (size_t f = 0; f < jac.d_Gamma.size(); ++f) out.col(static_cast<Eigen::Index>(f)) = vec(jac.d_Gamma[f]);
  return out;
}

}  // namespace flexagg
