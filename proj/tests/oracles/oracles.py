"""Independent reference values for the C++ tests.

Each block solves a small instance with an off-the-shelf solver (HiGHS via
scipy, Clarabel via cvxpy, exact polygon/hull volumes) and prints the numbers
that are frozen into tests/*.cpp. Rerun with `python3 oracles.py`.
"""
import numpy as np
import cvxpy as cp
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection


def facet_matrix(T, dt=1.0):
    L = np.tril(np.ones((T, T))) * dt
    I = np.eye(T)
    return np.vstack([L, -L, I, -I])


def fmt(v):
    return ", ".join(f"{x:.12g}" for x in np.ravel(v))


def lp_small():
    c = np.array([1.0, 2.0, -1.0])
    G = np.array([[1, 1, 1], [-1, 0, 0], [0, -1, 0], [0, 0, -1], [0, 0, 1], [1, -1, 0]], float)
    h = np.array([4.0, 0.0, 0.0, 0.0, 3.0, 1.0])
    A = np.array([[1.0, 0.0, 1.0]])
    b = np.array([2.5])
    r = linprog(c, A_ub=G, b_ub=h, A_eq=A, b_eq=b, bounds=[(None, None)] * 3, method="highs")
    print("lp_small x =", fmt(r.x), " obj =", f"{r.fun:.12g}")


def qp_small():
    x = cp.Variable(3)
    Q = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]])
    c = np.array([-1.0, 0.5, -2.0])
    G = np.array([[1, 1, 1], [-1, 0, 0], [0, 1, -1]], float)
    h = np.array([0.5, 0.2, 0.1])
    prob = cp.Problem(cp.Minimize(0.5 * cp.quad_form(x, Q) + c @ x), [G @ x <= h])
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    print("qp_small x =", fmt(x.value), " obj =", f"{prob.value:.12g}")


def containment(h0, hi, T, rho):
    H = facet_matrix(T)
    m = 4 * T
    g = cp.Variable(T)
    G = cp.Variable((T, T))
    Lam = cp.Variable((m, m), nonneg=True)
    cons = [Lam @ H == H @ G, Lam @ h0 + H @ g <= hi]
    obj = cp.trace(G) - (rho / 2) * cp.sum_squares(G)
    prob = cp.Problem(cp.Maximize(obj), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-11, tol_gap_rel=1e-11, tol_feas=1e-11, max_iter=500)
    return polish_containment(h0, hi, T, rho, g.value, G.value, Lam.value)


def polish_containment(h0, hi, T, rho, g, G, Lam, thr=1e-6):
    # The proximal term is weakly curved, so the interior-point Γ is only good
    # to ~1e-6. Fix the active set it found and solve the equality-constrained
    # QP exactly; Γ is unique even though γ and Λ are not.
    H = facet_matrix(T)
    m = 4 * T
    n = T + T * T + m * m
    iG, iL = T, T + T * T
    rows = []
    # Λ H − H Γ = 0 (row-major vec)
    for a in range(m):
        for b in range(T):
            r = np.zeros(n)
            for k in range(m):
                r[iL + a * m + k] += H[k, b]
            for k in range(T):
                r[iG + k * T + b] -= H[a, k]
            rows.append((r, 0.0))
    slack = hi - (Lam @ h0 + H @ g)
    for a in range(m):
        if slack[a] < thr:
            r = np.zeros(n)
            r[:T] = H[a]
            r[iL + a * m: iL + (a + 1) * m] = h0
            rows.append((r, hi[a]))
    for a in range(m):
        for k in range(m):
            if Lam[a, k] < thr:
                r = np.zeros(n)
                r[iL + a * m + k] = 1.0
                rows.append((r, 0.0))
    A = np.array([r for r, _ in rows])
    b = np.array([v for _, v in rows])
    Q = np.zeros((n, n))
    c = np.zeros(n)
    Q[iG:iL, iG:iL] = rho * np.eye(T * T)
    c[iG:iL] = -np.eye(T).ravel()
    K = np.block([[Q, A.T], [A, np.zeros((len(b), len(b)))]])
    sol = np.linalg.lstsq(K, np.concatenate([-c, b]), rcond=1e-13)[0]
    x = sol[:n]
    Gp = x[iG:iL].reshape(T, T)
    assert np.abs(A @ x - b).max() < 1e-10
    # γ, Λ certifying that the polished Γ is feasible (maximize the worst slack).
    nv = T + m * m + 1
    A_eq, b_eq, A_ub, b_ub = [], [], [], []
    for a in range(m):
        for bcol in range(T):
            r = np.zeros(nv)
            r[T + a * m: T + (a + 1) * m] = H[:, bcol]
            A_eq.append(r)
            b_eq.append((H @ Gp)[a, bcol])
    for a in range(m):
        r = np.zeros(nv)
        r[:T] = H[a]
        r[T + a * m: T + (a + 1) * m] = h0
        r[-1] = 1.0
        A_ub.append(r)
        b_ub.append(hi[a])
    cost = np.zeros(nv)
    cost[-1] = -1.0
    bounds = [(None, None)] * T + [(0, None)] * (m * m) + [(None, 1.0)]
    lp = linprog(cost, A_ub=np.array(A_ub), b_ub=b_ub, A_eq=np.array(A_eq), b_eq=b_eq, bounds=bounds, method="highs")
    assert lp.status == 0 and lp.x[-1] > -1e-9, lp
    return lp.x[:T], Gp, np.trace(Gp) - rho / 2 * np.sum(Gp ** 2)


def containment_lp_trace(h0, hi, T):
    # max tr Γ as a plain LP in HiGHS; variables [γ, vecΓ (row-major), vecΛ (row-major)]
    H = facet_matrix(T)
    m = 4 * T
    n = T + T * T + m * m
    c = np.zeros(n)
    for i in range(T):
        c[T + i * T + i] = -1.0
    Aeq = np.zeros((m * T, n))
    for r in range(m):
        for q in range(T):
            row = r * T + q
            for k in range(m):
                Aeq[row, T + T * T + r * m + k] = H[k, q]
            for p in range(T):
                Aeq[row, T + p * T + q] -= H[r, p]
    Aub = np.zeros((m, n))
    for r in range(m):
        for k in range(m):
            Aub[r, T + T * T + r * m + k] = h0[k]
        Aub[r, :T] = H[r]
    bounds = [(None, None)] * (T + T * T) + [(0, None)] * (m * m)
    res = linprog(c, A_ub=Aub, b_ub=hi, A_eq=Aeq, b_eq=np.zeros(m * T), bounds=bounds, method="highs")
    return -res.fun


def projection(h, eps, T):
    H = facet_matrix(T)
    hp = cp.Variable(4 * T)
    u = cp.Variable(T)
    prob = cp.Problem(cp.Minimize(cp.sum_squares(hp - h)), [H @ u + eps <= hp])
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return hp.value


def exact_volume(h, T, dt=1.0):
    H = facet_matrix(T, dt)
    r = linprog(np.r_[np.zeros(T), -1.0], A_ub=np.c_[H, np.linalg.norm(H, axis=1)], b_ub=h,
                bounds=[(None, None)] * T + [(0, None)], method="highs")
    center = r.x[:T]
    hs = HalfspaceIntersection(np.c_[H, -h], center)
    return ConvexHull(hs.intersections).volume


def peak_centralized(fleet, p, T):
    H = facet_matrix(T)
    us = [cp.Variable(T) for _ in fleet]
    s = cp.Variable()
    cons = [H @ u <= h for u, h in zip(us, fleet)]
    tot = sum(us) + p
    cons += [tot <= s, -tot <= s]
    prob = cp.Problem(cp.Minimize(s), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return prob.value


if __name__ == "__main__":
    lp_small()
    qp_small()

    T = 2
    h0 = np.array([1.2, 2.0, 0.9, 1.6, 1.0, 1.1, 0.8, 0.7])
    hi = np.array([2.1, 3.0, 1.5, 2.2, 1.8, 1.4, 1.2, 1.6])
    print("containment A lp trace =", f"{containment_lp_trace(h0, hi, T):.12g}")
    g, G, val = containment(h0, hi, T, 1e-2)
    print("containment A prox gamma =", fmt(g), " Gamma(col-major) =", fmt(G.T), " obj =", f"{val:.12g}")

    T = 3
    h0 = np.array([2.0, 3.1, 4.0, 1.5, 2.5, 3.2, 1.4, 1.3, 1.5, 1.1, 1.2, 0.9])
    hi = np.array([3.0, 4.4, 5.5, 2.0, 3.3, 4.1, 2.0, 1.6, 2.4, 1.5, 1.4, 1.7])
    print("containment B lp trace =", f"{containment_lp_trace(h0, hi, T):.12g}")
    g, G, val = containment(h0, hi, T, 1e-2)
    print("containment B prox gamma =", fmt(g), " Gamma(col-major) =", fmt(G.T), " obj =", f"{val:.12g}")

    T = 2
    h = np.array([0.5, -0.8, 0.3, 0.9, 1.0, -0.2, 0.4, 0.6])
    eps = 0.01
    print("projection A h_tilde =", fmt(projection(h, eps, T)))
    h = np.array([1.0, 1.0, 1.0, 1.0, -0.5, 1.0, -0.5, 1.0])
    print("projection B h_tilde =", fmt(projection(h, eps, T)))
    T = 3
    h = np.array([0.5, -0.8, 0.3, 0.9, 1.0, -0.2, 0.4, 0.6, -0.3, 0.2, 0.7, 0.1])
    print("projection C h_tilde =", fmt(projection(h, eps, T)))

    T = 3
    h = np.array([1.0, 1.6, 2.1, 0.2, 0.9, 1.4, 0.8, 0.7, 0.9, 0.6, 0.8, 0.5])
    print("volume T3 exact =", f"{exact_volume(h, T):.12g}")
    T = 2
    h = np.array([1.3, 1.7, 0.4, 0.6, 1.0, 0.9, 0.5, 0.7])
    print("volume T2 exact =", f"{exact_volume(h, T):.12g}")
    T = 3
    h = np.array([0.8, 1.1, 1.5, 0.5, 0.7, 0.9, 0.9, 0.6, 0.7, 0.4, 0.5, 0.6])
    print("volume T3 dt0.5 exact =", f"{exact_volume(h, T, 0.5):.12g}")

    T = 3
    fleet = [np.array([3.0, 6.0, 7.0, 0.0, -1.0, -2.0, 3.0, 3.0, 3.0, 0.0, 0.0, 0.0]),
             np.array([0.0, 4.0, 8.0, 0.0, 0.0, -3.0, 0.0, 4.0, 4.0, 0.0, 4.0, 4.0])]
    p = np.array([5.0, 9.0, 4.0])
    print("peak centralized =", f"{peak_centralized(fleet, p, T):.12g}")
