"""Dense convex quadratic programming via a dual active-set method.

Solves  min 0.5 z^T H z + f^T z + const
        s.t. A_ineq z <= b_ineq,  A_eq z = d_eq,  lo <= z <= hi

with H symmetric positive definite (PSD inputs are lightly regularized).
The dual active-set scheme (Goldfarb-Idnani) starts from the unconstrained
minimizer, needs no feasibility phase, and reports infeasibility exactly when
no primal/dual step exists for a violated constraint.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration-limit"


@dataclass
class QuadraticProgram:
    hessian: np.ndarray
    linear: np.ndarray
    a_ineq: np.ndarray = None
    b_ineq: np.ndarray = None
    a_eq: np.ndarray = None
    b_eq: np.ndarray = None
    lo: np.ndarray = None
    hi: np.ndarray = None
    constant: float = 0.0

    def __post_init__(self):
        self.hessian = np.asarray(self.hessian, dtype=float)
        self.linear = np.asarray(self.linear, dtype=float)
        n = self.linear.shape[0]
        if self.hessian.shape != (n, n):
            raise ValueError("hessian/linear dimension mismatch")
        if not np.allclose(self.hessian, self.hessian.T, atol=1e-9):
            raise ValueError("hessian must be symmetric")
        for name in ("a_ineq", "a_eq"):
            A = getattr(self, name)
            if A is not None:
                A = np.atleast_2d(np.asarray(A, dtype=float))
                if A.shape[1] != n:
                    raise ValueError(f"{name} column count mismatch")
                setattr(self, name, A)
        for aname, bname in (("a_ineq", "b_ineq"), ("a_eq", "b_eq")):
            A, b = getattr(self, aname), getattr(self, bname)
            if (A is None) != (b is None):
                raise ValueError(f"{aname}/{bname} must be given together")
            if b is not None:
                b = np.atleast_1d(np.asarray(b, dtype=float))
                if b.shape[0] != A.shape[0]:
                    raise ValueError(f"{bname} row count mismatch")
                setattr(self, bname, b)
        for name in ("lo", "hi"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                if v.shape != (n,):
                    raise ValueError(f"{name} length mismatch")
                setattr(self, name, v)

    @property
    def n(self):
        return self.linear.shape[0]


@dataclass
class QPSolution:
    z: np.ndarray
    objective: float
    status: str
    duals_ineq: np.ndarray
    duals_eq: np.ndarray
    duals_lo: np.ndarray
    duals_hi: np.ndarray
    iterations: int
    regularized: bool = False


class _Rows:
    """Stacked constraint rows c^T z >= b with bookkeeping to original slots."""

    def __init__(self, qp):
        n = qp.n
        C, b, kinds = [], [], []
        if qp.a_eq is not None:
            for i in range(qp.a_eq.shape[0]):
                C.append(qp.a_eq[i])
                b.append(qp.b_eq[i])
                kinds.append(("eq", i))
        if qp.a_ineq is not None:
            for i in range(qp.a_ineq.shape[0]):
                C.append(-qp.a_ineq[i])
                b.append(-qp.b_ineq[i])
                kinds.append(("ineq", i))
        if qp.lo is not None:
            for i in range(n):
                if np.isfinite(qp.lo[i]):
                    e = np.zeros(n)
                    e[i] = 1.0
                    C.append(e)
                    b.append(qp.lo[i])
                    kinds.append(("lo", i))
        if qp.hi is not None:
            for i in range(n):
                if np.isfinite(qp.hi[i]):
                    e = np.zeros(n)
                    e[i] = -1.0
                    C.append(e)
                    b.append(-qp.hi[i])
                    kinds.append(("hi", i))
        self.C = np.array(C) if C else np.zeros((0, n))
        self.b = np.array(b) if b else np.zeros(0)
        self.kinds = kinds
        self.n_eq = qp.a_eq.shape[0] if qp.a_eq is not None else 0


def solve_qp(qp, feas_tol=1e-9, max_iter=None, warm_rows=None):
    """Solve a convex QP; returns a QPSolution with per-row dual multipliers.

    ``warm_rows`` optionally lists internal constraint-row indices to try
    first (e.g. the previous active set from a sequence of similar QPs).
    """
    n = qp.n
    G = 0.5 * (qp.hessian + qp.hessian.T)
    regularized = False
    scale = max(1.0, float(np.trace(np.abs(G))) / n)
    try:
        cho = cho_factor(G, lower=True)
    except np.linalg.LinAlgError:
        G = G + 1e-10 * scale * np.eye(n)
        regularized = True
        try:
            cho = cho_factor(G, lower=True)
        except np.linalg.LinAlgError:
            raise ValueError("hessian is not positive semidefinite")

    rows = _Rows(qp)
    m = rows.C.shape[0]
    if max_iter is None:
        max_iter = 50 * (m + n) + 100

    x = cho_solve(cho, -qp.linear)
    active = []          # row indices
    is_eq = []           # parallel flags
    signs = []           # +1/-1 applied to eq rows during addition
    N = np.zeros((n, 0))
    GinvN = np.zeros((n, 0))
    Lm = np.zeros((0, 0))
    u = np.zeros(0)

    def drop(pos):
        nonlocal N, GinvN, Lm, u
        for lst in (active, is_eq, signs):
            del lst[pos]
        N = np.delete(N, pos, axis=1)
        GinvN = np.delete(GinvN, pos, axis=1)
        u = np.delete(u, pos)
        M = N.T @ GinvN
        if M.size:
            try:
                Lm = np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                jitter = 1e-12 * max(1.0, float(np.trace(M)) / M.shape[0])
                Lm = np.linalg.cholesky(M + jitter * np.eye(M.shape[0]))
        else:
            Lm = np.zeros((0, 0))

    def add(c, gi, ell, dd):
        nonlocal N, GinvN, Lm, u
        q = N.shape[1]
        N = np.column_stack([N, c])
        GinvN = np.column_stack([GinvN, gi])
        new = np.zeros((q + 1, q + 1))
        new[:q, :q] = Lm
        new[q, :q] = ell
        new[q, q] = dd
        Lm = new
        u = np.append(u, 0.0)

    iters = 0

    def work_on(p_row, sign, as_eq):
        """Drive one violated constraint to satisfaction. Returns status."""
        nonlocal x, u, iters
        c = sign * rows.C[p_row]
        bnd = sign * rows.b[p_row]
        gi = cho_solve(cho, c)
        u_plus = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                return ITERATION_LIMIT
            s = float(c @ x) - bnd
            if not as_eq and s >= -feas_tol:
                # satisfied without entering the active set
                return None
            q = N.shape[1]
            if q:
                w = N.T @ gi
                ell = solve_triangular(Lm, w, lower=True)
                r = solve_triangular(Lm.T, ell, lower=False)
                z = gi - GinvN @ r
            else:
                ell = np.zeros(0)
                r = np.zeros(0)
                z = gi
            zn = float(z @ c)
            if as_eq and abs(s) <= feas_tol and zn <= 1e-13 * scale:
                break  # dependent equality already satisfied
            t2 = -s / zn if zn > 1e-13 * scale else np.inf
            t1 = np.inf
            k1 = -1
            for k in range(q):
                if not is_eq[k] and r[k] > 1e-13:
                    cand = u[k] / r[k]
                    if cand < t1:
                        t1, k1 = cand, k
            t = min(t1, t2)
            if not np.isfinite(t):
                return INFEASIBLE
            if q:
                u[:q] -= t * r
            u_plus += t
            if t2 <= t1:
                # Full primal step: the constraint becomes satisfied and active.
                x = x + t2 * z
                dd2 = float(c @ gi) - float(ell @ ell)
                if dd2 <= 1e-14 * scale:
                    # numerically dependent; accept if satisfied
                    if abs(float(c @ x) - bnd) <= 1e-7:
                        break
                    return INFEASIBLE
                add(c, gi, ell, np.sqrt(dd2))
                active.append(p_row)
                is_eq.append(as_eq)
                signs.append(sign)
                u[-1] = u_plus
                break
            # Partial (or pure dual) step: a blocking multiplier hit zero.
            if np.isfinite(t2):
                x = x + t1 * z
            drop(k1)
        return None

    # Equalities first.
    for p in range(rows.n_eq):
        s = float(rows.C[p] @ x) - rows.b[p]
        sign = -1.0 if s > 0 else 1.0
        st = work_on(p, sign, True)
        if st is not None:
            return _finish(qp, rows, x, active, signs, u, st, iters, regularized)

    # Inequalities: repeatedly fix the most violated row.
    order_hint = list(warm_rows) if warm_rows else []
    while True:
        s_all = rows.C @ x - rows.b
        s_all[:rows.n_eq] = 0.0
        for a in active:
            s_all[a] = 0.0
        p = None
        for h in order_hint:
            if rows.n_eq <= h < m and s_all[h] < -feas_tol and h not in active:
                p = h
                break
        if p is None:
            worst = int(np.argmin(s_all)) if m else 0
            if m == 0 or s_all[worst] >= -feas_tol:
                break
            p = worst
        st = work_on(p, 1.0, False)
        if st is not None:
            return _finish(qp, rows, x, active, signs, u, st, iters, regularized)
        if iters > max_iter:
            return _finish(qp, rows, x, active, signs, u, ITERATION_LIMIT,
                           iters, regularized)
    return _finish(qp, rows, x, active, signs, u, OPTIMAL, iters, regularized)


def _finish(qp, rows, x, active, signs, u, status, iters, regularized):
    n = qp.n
    duals_ineq = np.zeros(qp.a_ineq.shape[0] if qp.a_ineq is not None else 0)
    duals_eq = np.zeros(qp.a_eq.shape[0] if qp.a_eq is not None else 0)
    duals_lo = np.zeros(n)
    duals_hi = np.zeros(n)
    for pos, row in enumerate(active):
        kind, idx = rows.kinds[row]
        val = float(u[pos])
        if kind == "eq":
            duals_eq[idx] = -signs[pos] * val
        elif kind == "ineq":
            duals_ineq[idx] = val
        elif kind == "lo":
            duals_lo[idx] = val
        else:
            duals_hi[idx] = val
    obj = float(0.5 * x @ qp.hessian @ x + qp.linear @ x + qp.constant)
    return QPSolution(x, obj, status, duals_ineq, duals_eq, duals_lo,
                      duals_hi, iters, regularized)


def kkt_residuals(qp, sol):
    """(stationarity, primal feasibility, dual feasibility, complementarity)."""
    z = sol.z
    g = qp.hessian @ z + qp.linear
    primal = 0.0
    comp = 0.0
    if qp.a_ineq is not None:
        s = qp.a_ineq @ z - qp.b_ineq
        primal = max(primal, float(np.max(s, initial=0.0)))
        g = g + qp.a_ineq.T @ sol.duals_ineq
        comp = max(comp, float(np.max(np.abs(sol.duals_ineq * s), initial=0.0)))
    if qp.a_eq is not None:
        primal = max(primal, float(np.max(np.abs(qp.a_eq @ z - qp.b_eq),
                                          initial=0.0)))
        g = g + qp.a_eq.T @ sol.duals_eq
    if qp.lo is not None:
        lo = np.where(np.isfinite(qp.lo), qp.lo, z)
        primal = max(primal, float(np.max(lo - z, initial=0.0)))
        g = g - sol.duals_lo
        comp = max(comp, float(np.max(np.abs(sol.duals_lo * (z - lo)),
                                      initial=0.0)))
    if qp.hi is not None:
        hi = np.where(np.isfinite(qp.hi), qp.hi, z)
        primal = max(primal, float(np.max(z - hi, initial=0.0)))
        g = g + sol.duals_hi
        comp = max(comp, float(np.max(np.abs(sol.duals_hi * (hi - z)),
                                      initial=0.0)))
    dual = 0.0
    for arr in (sol.duals_ineq, sol.duals_lo, sol.duals_hi):
        if arr.size:
            dual = max(dual, float(np.max(-arr, initial=0.0)))
    return float(np.max(np.abs(g))), primal, dual, comp
