#pragma once

// Primal-dual interior-point solver for linear and convex quadratic programs
//
//   minimize    ½ xᵀQx + cᵀx
//   subject to  A x  = b
//               G x ≤ h
//
// using Mehrotra's predictor-corrector method on the augmented quasi-definite
// Newton system.
//
// The constraint matrices are kept sparse: the containment programs have a
// 16T²-entry nonnegative block whose rows are single identity entries, and
// storing them densely makes each Newton step cubic in T².

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string_view>
#include <vector>

#include "flexagg/error.hpp"

namespace flexagg {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

struct ConeProgram {
  Vec c;
  SpMat Q;  // n×n symmetric PSD; empty (0×0 or no nonzeros) for an LP
  SpMat A;  // p×n
  Vec b;
  SpMat G;  // m×n
  Vec h;

  Eigen::Index num_variables() const { return c.size(); }
  Eigen::Index num_equalities() const { return b.size(); }
  Eigen::Index num_inequalities() const { return h.size(); }
  bool has_quadratic() const { return Q.rows() > 0 && Q.nonZeros() > 0; }

  /// Throws kDimensionMismatch / kInvalidArgument on malformed data.
  void validate() const;
};

enum class SolveStatus { kOptimal, kInfeasible, kUnbounded, kNumericFailure };

inline std::string_view to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOptimal: return "Optimal";
    case SolveStatus::kInfeasible: return "Infeasible";
    case SolveStatus::kUnbounded: return "Unbounded";
    case SolveStatus::kNumericFailure: return "NumericFailure";
  }
  return "Unknown";
}

/// Max-norm KKT residuals evaluated at the returned point, using g = Gx − h
/// (not the internal slack) for feasibility and complementarity.
struct KktResiduals {
  double stationarity = 0.0;  // ‖Qx + c + Aᵀy + Gᵀz‖∞
  double primal_feas = 0.0;   // max(‖Ax − b‖∞, max(Gx − h)₊)
  double dual_feas = 0.0;     // max(−z)₊
  double comp_slack = 0.0;    // max |zᵢ (Gx − h)ᵢ|

  double max() const { return std::max({stationarity, primal_feas, dual_feas, comp_slack}); }
};

struct PrimalDualSolution {
  Vec primal;
  Vec eq_multipliers;    // one per row of A, in row order
  Vec ineq_multipliers;  // one per row of G, in row order, ≥ 0
  Vec slacks;            // h − Gx
  SolveStatus status = SolveStatus::kNumericFailure;
  KktResiduals residuals;
  double objective = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;

  bool optimal() const { return status == SolveStatus::kOptimal; }
};

struct SolverOptions {
  double tol = 1e-8;  // on residuals, scaled by 1 + max(‖b‖∞, ‖h‖∞, ‖c‖∞)
  int max_iterations = 80;
  double regularization = 1e-8;
  int refinement_steps = 12;  // upper bound; refinement stops when it stalls
  int polish_steps = 2;       // active-set Newton corrections after convergence; 0 disables
};

namespace detail {

inline double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

inline double max_step(const Vec& v, const Vec& dv) {
  double alpha = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  }
  return alpha;
}

inline KktResiduals evaluate_residuals(const ConeProgram& p, const Vec& x, const Vec& y,
                                       const Vec& z) {
  KktResiduals r;
  Vec rd = p.c;
  if (p.has_quadratic()) rd += p.Q * x;
  if (p.A.rows() > 0) rd += p.A.transpose() * y;
  if (p.G.rows() > 0) rd += p.G.transpose() * z;
  r.stationarity = inf_norm(rd);
  if (p.A.rows() > 0) r.primal_feas = inf_norm(p.A * x - p.b);
  if (p.G.rows() > 0) {
    const Vec g = p.G * x - p.h;
    r.primal_feas = std::max(r.primal_feas, std::max(0.0, g.maxCoeff()));
    r.dual_feas = std::max(0.0, -z.minCoeff());
    r.comp_slack = z.cwiseProduct(g).cwiseAbs().maxCoeff();
  }
  return r;
}

inline double objective_value(const ConeProgram& p, const Vec& x) {
  double f = p.c.dot(x);
  if (p.has_quadratic()) f += 0.5 * x.dot(p.Q * x);
  return f;
}

/// Augmented Newton system
///
///   [ Q + δI   Aᵀ    Gᵀ      ]
///   [ A        −δI   0       ]
///   [ G        0     −D − δI ],   D = diag(s ./ z),
///
/// whose pattern is fixed, so only the diagonal changes between iterations.
class NewtonSystem {
 public:
  NewtonSystem(const ConeProgram& p, double reg) : base_reg_(reg), reg_(reg) {
    n_ = p.num_variables();
    neq_ = p.num_equalities();
    m_ = p.num_inequalities();
    const Eigen::Index dim = n_ + neq_ + m_;
    Triplets trips;
    trips.reserve(static_cast<size_t>(p.Q.nonZeros() + 2 * p.A.nonZeros() + 2 * p.G.nonZeros() + dim));
    auto add = [&trips](const SpMat& block, Eigen::Index r0, Eigen::Index c0) {
      for (int k = 0; k < block.outerSize(); ++k) {
        for (SpMat::InnerIterator it(block, k); it; ++it) {
          trips.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
          trips.emplace_back(c0 + it.col(), r0 + it.row(), it.value());
        }
      }
    };
    if (neq_ > 0) add(p.A, n_, 0);
    if (m_ > 0) add(p.G, n_ + neq_, 0);
    qdiag_ = Vec::Zero(n_);
    if (p.has_quadratic()) {
      for (int k = 0; k < p.Q.outerSize(); ++k) {
        for (SpMat::InnerIterator it(p.Q, k); it; ++it) {
          if (it.row() == it.col()) qdiag_[it.row()] += it.value();
          else trips.emplace_back(it.row(), it.col(), it.value());
        }
      }
    }
    for (Eigen::Index i = 0; i < dim; ++i) trips.emplace_back(i, i, 0.0);
    K_.resize(dim, dim);
    K_.setFromTriplets(trips.begin(), trips.end());
    K_.makeCompressed();
    diag_.resize(static_cast<size_t>(dim));
    for (Eigen::Index i = 0; i < dim; ++i) diag_[static_cast<size_t>(i)] = &K_.coeffRef(i, i);
    ldlt_.analyzePattern(K_);
  }

  /// Factorizes with the base regularization, escalating it by 10× up to
  /// 1e-4 when a pivot breaks down; refinement removes the perturbation.
  bool factorize(const Vec& d) {
    for (reg_ = base_reg_; reg_ <= 1e-4; reg_ *= 10.0) {
      if (factorize_once(d)) return true;
    }
    return false;
  }

  double regularization() const { return reg_; }

  // Solves the unregularized system by refinement, stopping once the
  // residual no longer shrinks.
  Vec solve(const Vec& rhs, int refinement_steps) const {
    Vec sol = ldlt_.solve(rhs);
    double last = std::numeric_limits<double>::infinity();
    for (int it = 0; it < refinement_steps; ++it) {
      Vec resid = rhs - K_ * sol;
      resid.head(n_) += reg_ * sol.head(n_);
      resid.tail(neq_ + m_) -= reg_ * sol.tail(neq_ + m_);
      const double r = inf_norm(resid);
      if (it >= 2 && !(r < 0.5 * last)) break;
      last = r;
      sol += ldlt_.solve(resid);
    }
    return sol;
  }

 private:
  bool factorize_once(const Vec& d) {
    for (Eigen::Index i = 0; i < n_; ++i) *diag_[static_cast<size_t>(i)] = qdiag_[i] + reg_;
    for (Eigen::Index i = 0; i < neq_; ++i) *diag_[static_cast<size_t>(n_ + i)] = -reg_;
    for (Eigen::Index j = 0; j < m_; ++j) *diag_[static_cast<size_t>(n_ + neq_ + j)] = -d[j] - reg_;
    ldlt_.factorize(K_);
    if (ldlt_.info() != Eigen::Success) return false;
    return ldlt_.vectorD().allFinite();
  }

  double base_reg_;
  double reg_;
  Eigen::Index n_ = 0;
  Eigen::Index neq_ = 0;
  Eigen::Index m_ = 0;
  Vec qdiag_;
  SpMat K_;
  std::vector<double*> diag_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

}  // namespace detail

inline void ConeProgram::validate() const {
  const Eigen::Index n = c.size();
  if (n == 0) throw Error(ErrorCode::kDimensionMismatch, "program has no variables");
  if (Q.rows() != 0 && (Q.rows() != n || Q.cols() != n)) {
    throw Error(ErrorCode::kDimensionMismatch, "Q must be n×n");
  }
  if (A.rows() != b.size() || (A.rows() > 0 && A.cols() != n)) {
    throw Error(ErrorCode::kDimensionMismatch, "A/b dimensions inconsistent");
  }
  if (G.rows() != h.size() || (G.rows() > 0 && G.cols() != n)) {
    throw Error(ErrorCode::kDimensionMismatch, "G/h dimensions inconsistent");
  }
  if (!c.allFinite() || !b.allFinite() || !h.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "non-finite program data");
  }
  if (has_quadratic()) {
    const SpMat asym = Q - SpMat(Q.transpose());
    double worst = 0.0;
    for (int k = 0; k < asym.outerSize(); ++k) {
      for (SpMat::InnerIterator it(asym, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
    }
    if (worst > 1e-10) throw Error(ErrorCode::kInvalidArgument, "Q is not symmetric");
    bool diagonal = true;
    double min_diag = 0.0;
    for (int k = 0; k < Q.outerSize(); ++k) {
      for (SpMat::InnerIterator it(Q, k); it; ++it) {
        if (it.row() != it.col() && it.value() != 0.0) diagonal = false;
        if (it.row() == it.col()) min_diag = std::min(min_diag, it.value());
      }
    }
    if (diagonal) {
      if (min_diag < -1e-10) throw Error(ErrorCode::kInvalidArgument, "Q is not positive semidefinite");
    } else if (n <= 2000) {
      Eigen::SelfAdjointEigenSolver<Mat> eig(Mat(Q), Eigen::EigenvaluesOnly);
      if (eig.eigenvalues().minCoeff() < -1e-10) {
        throw Error(ErrorCode::kInvalidArgument, "Q is not positive semidefinite");
      }
    }
  }
}

inline SpMat sparse_identity(Eigen::Index n) {
  SpMat eye(n, n);
  eye.setIdentity();
  return eye;
}

enum class JacobianSolve { kDirect, kRegularized, kSingular };

inline std::string_view to_string(JacobianSolve s) {
  switch (s) {
    case JacobianSolve::kDirect: return "Direct";
    case JacobianSolve::kRegularized: return "Regularized";
    case JacobianSolve::kSingular: return "Singular";
  }
  return "Unknown";
}

struct LinearSolveResult {
  Mat x;
  JacobianSolve kind = JacobianSolve::kSingular;
  double relative_residual = 0.0;
};

namespace detail {

inline double relative_residual(const SpMat& J, const Mat& x, const Mat& b) {
  const double scale = std::max(b.norm(), 1e-300);
  return (J * x - b).norm() / scale;
}

}  // namespace detail

/// Solves J X = B. LU when J is numerically nonsingular; otherwise iterated
/// Tikhonov steps X ← X + (JᵀJ + ρI)⁻¹ Jᵀ(B − J X), which converge to the
/// minimum-norm least-squares solution (slowly along directions with σ² ≈ ρ). `kSingular` means the system is
/// inconsistent beyond `accept`.
inline LinearSolveResult solve_kkt_jacobian(const SpMat& J, const Mat& B, double rho = 1e-8,
                                            int tikhonov_steps = 60, double accept = 1e-7) {
  LinearSolveResult out;
  {
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
    lu.analyzePattern(J);
    lu.factorize(J);
    if (lu.info() == Eigen::Success) {
      Mat x = lu.solve(B);
      if (x.allFinite()) {
        const double r = detail::relative_residual(J, x, B);
        if (r <= accept && x.norm() <= 1e8 * (1.0 + B.norm())) {
          out.x = std::move(x);
          out.kind = JacobianSolve::kDirect;
          out.relative_residual = r;
          return out;
        }
      }
    }
  }
  const SpMat Jt = J.transpose();
  SpMat N = Jt * J;
  N += rho * sparse_identity(J.cols());
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt(N);
  if (ldlt.info() != Eigen::Success) {
    out.x = Mat::Zero(J.cols(), B.cols());
    out.relative_residual = 1.0;
    return out;
  }
  Mat x = Mat::Zero(J.cols(), B.cols());
  const double scale = std::max(B.norm(), 1e-300);
  for (int it = 0; it < tikhonov_steps; ++it) {
    const Mat r = B - J * x;
    if (r.norm() <= 1e-13 * scale) break;
    x += ldlt.solve(Mat(Jt * r));
  }
  out.relative_residual = detail::relative_residual(J, x, B);
  out.kind = out.relative_residual <= accept ? JacobianSolve::kRegularized : JacobianSolve::kSingular;
  out.x = std::move(x);
  return out;
}

namespace detail {

/// Newton corrections on the KKT equations with the active set frozen at the
/// interior-point estimate (z_j > s_j): active rows are driven to g_j = 0,
/// inactive multipliers to z_j = 0. Returns true when the residuals improved.
inline bool polish(const ConeProgram& p, Vec& x, Vec& y, Vec& z, int steps) {
  const Eigen::Index n = p.num_variables(), neq = p.num_equalities(), m = p.num_inequalities();
  const Vec slack = p.h - p.G * x;
  std::vector<bool> active(static_cast<size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) active[static_cast<size_t>(j)] = z[j] > slack[j];

  Triplets trips;
  auto add = [&trips](const SpMat& block, Eigen::Index r0, Eigen::Index c0, bool transpose) {
    for (int k = 0; k < block.outerSize(); ++k) {
      for (SpMat::InnerIterator it(block, k); it; ++it) {
        if (transpose) trips.emplace_back(r0 + it.col(), c0 + it.row(), it.value());
        else trips.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
      }
    }
  };
  if (p.has_quadratic()) add(p.Q, 0, 0, false);
  if (neq > 0) {
    add(p.A, 0, n, true);
    add(p.A, n, 0, false);
  }
  if (m > 0) add(p.G, 0, n + neq, true);
  Eigen::SparseMatrix<double, Eigen::RowMajor> Gr(p.G);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::Index row = n + neq + j;
    if (active[static_cast<size_t>(j)]) {
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Gr, j); it; ++it) {
        trips.emplace_back(row, it.col(), it.value());
      }
    } else {
      trips.emplace_back(row, n + neq + j, 1.0);
    }
  }
  const Eigen::Index dim = n + neq + m;
  SpMat J(dim, dim);
  J.setFromTriplets(trips.begin(), trips.end());

  auto frozen = [&](Vec& zz) {
    for (Eigen::Index j = 0; j < m; ++j) {
      if (!active[static_cast<size_t>(j)]) zz[j] = 0.0;
    }
  };
  double best = evaluate_residuals(p, x, y, z).max();
  bool improved = false;
  Vec xs = x, ys = y, zs = z;
  for (int it = 0; it < steps; ++it) {
    Vec r(dim);
    Vec rd = p.c;
    if (p.has_quadratic()) rd += p.Q * xs;
    if (neq > 0) rd += p.A.transpose() * ys;
    if (m > 0) rd += p.G.transpose() * zs;
    r.head(n) = rd;
    if (neq > 0) r.segment(n, neq) = p.A * xs - p.b;
    if (m > 0) {
      const Vec g = p.G * xs - p.h;
      for (Eigen::Index j = 0; j < m; ++j) r[n + neq + j] = active[static_cast<size_t>(j)] ? g[j] : zs[j];
    }
    if (inf_norm(r) < 1e-15) break;
    const LinearSolveResult step = solve_kkt_jacobian(J, Mat(-r));
    if (!step.x.allFinite()) break;
    xs += step.x.col(0).head(n);
    ys += step.x.col(0).segment(n, neq);
    zs += step.x.col(0).tail(m);
    frozen(zs);
    const double res = evaluate_residuals(p, xs, ys, zs).max();
    if (!(res < best)) break;
    best = res;
    x = xs;
    y = ys;
    z = zs;
    improved = true;
  }
  return improved;
}

}  // namespace detail

/// Solves `program` to primal-dual optimality. Multipliers follow the
/// Lagrangian ½xᵀQx + cᵀx + yᵀ(Ax − b) + zᵀ(Gx − h).
inline PrimalDualSolution solve(const ConeProgram& program, const SolverOptions& opts = {}) {
  program.validate();
  const Eigen::Index n = program.num_variables();
  const Eigen::Index neq = program.num_equalities();
  const Eigen::Index m = program.num_inequalities();
  const SpMat& A = program.A;
  const SpMat& G = program.G;

  detail::NewtonSystem newton(program, opts.regularization);
  PrimalDualSolution out;

  // Starting point: least-squares primal with unit scaling, then shifted into
  // the positive orthant (Mehrotra's heuristic).
  Vec x = Vec::Zero(n), y = Vec::Zero(neq), z = Vec::Ones(m), s = Vec::Ones(m);
  if (newton.factorize(Vec::Ones(m))) {
    Vec rhs(n + neq + m);
    rhs.head(n) = -program.c;
    rhs.segment(n, neq) = program.b;
    rhs.tail(m) = program.h;
    const Vec sol = newton.solve(rhs, opts.refinement_steps);
    x = sol.head(n);
    y = sol.segment(n, neq);
    if (m > 0) {
      s = program.h - G * x;
      z = -s;
      const double ds = std::max(-1.5 * s.minCoeff(), 0.0) + 1e-2;
      const double dz = std::max(-1.5 * z.minCoeff(), 0.0) + 1e-2;
      s.array() += ds;
      z.array() += dz;
      const double sz = s.dot(z);
      s.array() += 0.5 * sz / z.sum();
      z.array() += 0.5 * sz / s.sum();
    }
  }

  const double data_scale =
      1.0 + std::max(detail::inf_norm(program.b), detail::inf_norm(program.h));
  const double tol = opts.tol * std::max(data_scale, 1.0 + detail::inf_norm(program.c));

  // Late iterations can lose accuracy once z ./ s spans many decades; the
  // best iterate seen is what gets returned.
  Vec best_x = x, best_y = y, best_z = z;
  double best_res = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    out.iterations = iter;
    Vec rd = program.c;
    if (program.has_quadratic()) rd += program.Q * x;
    if (neq > 0) rd += A.transpose() * y;
    if (m > 0) rd += G.transpose() * z;
    const Vec rp = neq > 0 ? Vec(A * x - program.b) : Vec();
    const Vec ri = m > 0 ? Vec(G * x + s - program.h) : Vec();
    const double mu = m > 0 ? s.dot(z) / static_cast<double>(m) : 0.0;

    const KktResiduals res = detail::evaluate_residuals(program, x, y, z);
    if (res.max() < best_res) {
      best_res = res.max();
      best_x = x;
      best_y = y;
      best_z = z;
    }
    if (res.max() <= tol) {
      out.status = SolveStatus::kOptimal;
      break;
    }

    // Certificates of infeasibility / unboundedness along diverging iterates.
    const double dual_norm = std::max(detail::inf_norm(y), detail::inf_norm(z));
    if (dual_norm > 1e6) {
      const Vec yn = y / dual_norm, zn = z / dual_norm;
      const double lin = (neq > 0 ? program.b.dot(yn) : 0.0) + (m > 0 ? program.h.dot(zn) : 0.0);
      Vec ray = Vec::Zero(n);
      if (neq > 0) ray += A.transpose() * yn;
      if (m > 0) ray += G.transpose() * zn;
      if (lin < -1e-6 && detail::inf_norm(ray) < 1e-6 * std::abs(lin) * data_scale) {
        out.status = SolveStatus::kInfeasible;
        break;
      }
    }
    const double primal_norm = detail::inf_norm(x);
    if (primal_norm > 1e7) {
      const Vec xn = x / primal_norm;
      const double descent = program.c.dot(xn);
      double viol = neq > 0 ? detail::inf_norm(A * xn) : 0.0;
      if (m > 0) viol = std::max(viol, std::max(0.0, (G * xn).maxCoeff()));
      if (program.has_quadratic()) viol = std::max(viol, detail::inf_norm(program.Q * xn));
      if (descent < -1e-6 && viol < 1e-6 * std::abs(descent)) {
        out.status = SolveStatus::kUnbounded;
        break;
      }
    }

    const Vec d = m > 0 ? Vec(s.cwiseQuotient(z)) : Vec();
    if (!newton.factorize(d)) break;

    auto direction = [&](const Vec& rc, Vec& dx, Vec& dy, Vec& dz, Vec& ds) {
      Vec rhs(n + neq + m);
      rhs.head(n) = -rd;
      if (neq > 0) rhs.segment(n, neq) = -rp;
      if (m > 0) rhs.tail(m) = -ri + rc.cwiseQuotient(z);
      const Vec sol = newton.solve(rhs, opts.refinement_steps);
      dx = sol.head(n);
      dy = sol.segment(n, neq);
      if (m > 0) {
        dz = sol.tail(m);
        ds = -(rc + s.cwiseProduct(dz)).cwiseQuotient(z);
      }
    };

    Vec dx, dy, dz, ds;
    if (m > 0) {
      // Predictor.
      Vec rc = s.cwiseProduct(z);
      direction(rc, dx, dy, dz, ds);
      const double a_aff =
          std::min(1.0, std::min(detail::max_step(s, ds), detail::max_step(z, dz)));
      const double mu_aff = (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(m);
      const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
      // Corrector.
      rc += ds.cwiseProduct(dz);
      rc.array() -= sigma * mu;
      direction(rc, dx, dy, dz, ds);
      const double a_max = std::min(detail::max_step(s, ds), detail::max_step(z, dz));
      const double alpha = std::min(1.0, 0.99 * a_max);
      if (!(alpha > 1e-14)) break;
      x += alpha * dx;
      y += alpha * dy;
      z += alpha * dz;
      s += alpha * ds;
    } else {
      direction(Vec(), dx, dy, dz, ds);
      x += dx;
      y += dy;
    }
    if (!x.allFinite() || !z.allFinite() || !y.allFinite()) break;
  }

  if (out.status != SolveStatus::kInfeasible && out.status != SolveStatus::kUnbounded) {
    const KktResiduals last = detail::evaluate_residuals(program, x, y, z);
    if (!(last.max() <= best_res)) {
      x = best_x;
      y = best_y;
      z = best_z;
    }
    if (opts.polish_steps > 0 && std::min(last.max(), best_res) <= 1e3 * tol) {
      detail::polish(program, x, y, z, opts.polish_steps);
    }
    if (detail::evaluate_residuals(program, x, y, z).max() <= tol) out.status = SolveStatus::kOptimal;
  }
  out.primal = x;
  out.eq_multipliers = y;
  out.ineq_multipliers = z;
  out.slacks = m > 0 ? Vec(program.h - G * x) : Vec();
  out.residuals = detail::evaluate_residuals(program, x, y, z);
  out.objective = detail::objective_value(program, x);
  if (out.status == SolveStatus::kOptimal && out.residuals.max() > tol) {
    out.status = SolveStatus::kNumericFailure;
  }
  return out;
}

inline PrimalDualSolution solve(const ConeProgram& program, double tol) {
  SolverOptions opts;
  opts.tol = tol;
  return solve(program, opts);
}

/// Sparse matrix from a dense one, dropping exact zeros.
inline SpMat to_sparse(const Mat& dense) { return dense.sparseView(); }

}  // namespace flexagg
