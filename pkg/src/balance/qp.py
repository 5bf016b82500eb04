"""Dense strictly-convex QP solver (equalities + inequalities, active set).

Problems here are tiny (at most a dozen variables), so every working-set
iteration re-solves a reduced KKT system from scratch; equality constraints
are eliminated through a QR null-space basis so the reduced Hessian stays
positive definite.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SV_CUTOFF = 1e-10


class QpError(ValueError):
    pass


@dataclass
class QpProblem:
    """min 1/2 x^T P x + g^T x  s.t.  A_eq x = b_eq, A_in x <= b_in."""

    p: np.ndarray
    g: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_in: np.ndarray | None = None
    b_in: np.ndarray | None = None

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        d = self.g.shape[0]
        if self.p.shape != (d, d):
            raise QpError("Hessian/gradient dimension mismatch")
        if np.linalg.norm(self.p - self.p.T) > 1e-10 * max(1.0, np.linalg.norm(self.p)):
            raise QpError("Hessian must be symmetric")
        ev = np.linalg.eigvalsh(self.p)
        if ev[0] <= 1e-12 * max(ev[-1], 1.0):
            raise QpError("Hessian must be positive definite")
        if self.a_eq is None:
            self.a_eq = np.zeros((0, d))
            self.b_eq = np.zeros(0)
        if self.a_in is None:
            self.a_in = np.zeros((0, d))
            self.b_in = np.zeros(0)
        self.a_eq = np.atleast_2d(np.asarray(self.a_eq, dtype=float))
        self.a_in = np.atleast_2d(np.asarray(self.a_in, dtype=float))
        self.b_eq = np.atleast_1d(np.asarray(self.b_eq, dtype=float))
        self.b_in = np.atleast_1d(np.asarray(self.b_in, dtype=float))
        if self.a_eq.shape[0] > d:
            raise QpError("more equality constraints than variables")

    @property
    def dim(self) -> int:
        return self.g.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.p @ x + self.g @ x)

    def to_json_dict(self) -> dict:
        return {
            "p": self.p.tolist(),
            "g": self.g.tolist(),
            "a_eq": self.a_eq.tolist(),
            "b_eq": self.b_eq.tolist(),
            "a_in": self.a_in.tolist(),
            "b_in": self.b_in.tolist(),
        }


@dataclass
class QpSolution:
    x: np.ndarray
    lam_eq: np.ndarray
    mu_in: np.ndarray
    active_set: list = field(default_factory=list)
    status: str = "optimal"
    iterations: int = 0
    objectives: list = field(default_factory=list)


def pinv_svd(a: np.ndarray, cutoff: float = SV_CUTOFF) -> np.ndarray:
    """Moore-Penrose pseudoinverse with a relative singular-value cutoff."""
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    keep = s > cutoff * (s[0] if s.size else 1.0)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (vt.T * inv) @ u.T


def solve_equality_ls(a: np.ndarray, b: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """Minimum-distance-from-x0 solution of a x = b (a full row rank)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    x0 = np.asarray(x0, dtype=float)
    dagger = pinv_svd(a)
    x = x0 + dagger @ (b - a @ x0)
    residual = np.linalg.norm(a @ x - b)
    if residual > 1e-8 * max(1.0, np.linalg.norm(b)):
        raise QpError(f"inconsistent equality system (residual {residual:.2e})")
    return x


def _solve_eq_qp(p: np.ndarray, g: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Strictly convex QP with equalities only, via QR null-space elimination."""
    d = g.shape[0]
    if a.shape[0] == 0:
        return np.linalg.solve(p, -g), np.zeros(0)
    q, r = np.linalg.qr(a.T, mode="complete")
    m = a.shape[0]
    rank = int(np.sum(np.abs(np.diag(r[:m, :m])) > SV_CUTOFF * max(1.0, np.abs(r).max())))
    if rank < m:
        raise QpError("degenerate working set (rank-deficient constraints)")
    x_part = pinv_svd(a) @ b
    if np.linalg.norm(a @ x_part - b) > 1e-8 * max(1.0, np.linalg.norm(b)):
        raise QpError("infeasible equality system")
    z = q[:, m:]
    if z.shape[1] > 0:
        red = z.T @ p @ z
        y = np.linalg.solve(red, -z.T @ (p @ x_part + g))
        x = x_part + z @ y
    else:
        x = x_part
    lam, *_ = np.linalg.lstsq(a.T, -(p @ x + g), rcond=None)
    return x, lam


def solve(problem: QpProblem, tol: float = 1e-9, max_iter: int = 200) -> QpSolution:
    """Active-set solve; ties broken by lowest constraint index for determinism."""
    p, g = problem.p, problem.g
    a_eq, b_eq = problem.a_eq, problem.b_eq
    a_in, b_in = problem.a_in, problem.b_in
    m_e, m_i = a_eq.shape[0], a_in.shape[0]
    scale = max(1.0, np.abs(p).max(), np.abs(g).max())
    working: list[int] = []
    objectives: list[float] = []

    x = np.zeros(problem.dim)
    lam = np.zeros(m_e)
    mu = np.zeros(m_i)
    for it in range(1, max_iter + 1):
        a_ws = np.vstack([a_eq, a_in[working]]) if working else a_eq
        b_ws = np.concatenate([b_eq, b_in[working]]) if working else b_eq
        try:
            x, lam_all = _solve_eq_qp(p, g, a_ws, b_ws)
        except QpError:
            return QpSolution(x, lam, mu, list(working), "infeasible", it, objectives)
        lam = lam_all[:m_e]
        mu = np.zeros(m_i)
        mu[working] = lam_all[m_e:]
        objectives.append(problem.objective(x))

        neg = [i for i in working if mu[i] < -tol * scale]
        if neg:
            drop = min(neg, key=lambda i: (mu[i], i))
            working.remove(drop)
            continue
        violation = a_in @ x - b_in if m_i else np.zeros(0)
        worst = -1
        worst_v = tol * max(1.0, np.abs(b_in).max() if m_i else 1.0)
        for i in range(m_i):
            if i not in working and violation[i] > worst_v:
                worst_v = violation[i]
                worst = i
        if worst < 0:
            mu = np.maximum(mu, 0.0)
            return QpSolution(x, lam, mu, sorted(working), "optimal", it, objectives)
        working.append(worst)
        working.sort()
    return QpSolution(x, lam, mu, sorted(working), "max_iter", max_iter, objectives)


def kkt_residuals(problem: QpProblem, sol: QpSolution) -> dict:
    """Independent certificate of stationarity/feasibility/complementarity."""
    x, lam, mu = sol.x, sol.lam_eq, sol.mu_in
    stat = problem.p @ x + problem.g
    if problem.a_eq.shape[0]:
        stat = stat + problem.a_eq.T @ lam
    if problem.a_in.shape[0]:
        stat = stat + problem.a_in.T @ mu
    eq = problem.a_eq @ x - problem.b_eq if problem.a_eq.shape[0] else np.zeros(0)
    ineq = problem.a_in @ x - problem.b_in if problem.a_in.shape[0] else np.zeros(0)
    return {
        "stationarity": float(np.linalg.norm(stat, np.inf)),
        "eq_feasibility": float(np.linalg.norm(eq, np.inf)) if eq.size else 0.0,
        "in_feasibility": float(max(0.0, ineq.max())) if ineq.size else 0.0,
        "dual_feasibility": float(max(0.0, -(mu.min()) if mu.size else 0.0)),
        "complementarity": float(np.abs(mu * ineq).max()) if ineq.size else 0.0,
    }


def solve_by_enumeration(problem: QpProblem) -> np.ndarray:
    """Brute-force oracle: try every active subset, keep the best KKT point."""
    from itertools import combinations

    m_i = problem.a_in.shape[0]
    best, best_obj = None, np.inf
    for k in range(m_i + 1):
        for subset in combinations(range(m_i), k):
            a = np.vstack([problem.a_eq, problem.a_in[list(subset)]])
            b = np.concatenate([problem.b_eq, problem.b_in[list(subset)]])
            if a.shape[0] > problem.dim:
                continue
            try:
                x, lam_all = _solve_eq_qp(problem.p, problem.g, a, b)
            except (QpError, np.linalg.LinAlgError):
                continue
            mu = lam_all[problem.a_eq.shape[0]:]
            if mu.size and mu.min() < -1e-9:
                continue
            if m_i and (problem.a_in @ x - problem.b_in).max() > 1e-9:
                continue
            obj = problem.objective(x)
            if obj < best_obj - 1e-12:
                best, best_obj = x, obj
    if best is None:
        raise QpError("enumeration found no feasible KKT point")
    return best
