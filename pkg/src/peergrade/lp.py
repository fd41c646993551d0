"""A small dense two-phase simplex for the explainer's inner linear programs.

The problems are tiny (a few dozen variables), so a tableau implementation
with Bland's anti-cycling rule is both fast enough and easy to audit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-10


@dataclass(frozen=True)
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    objective: float


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]


def _run(T: np.ndarray, basis: list[int], allowed: np.ndarray, max_iter: int = 10_000) -> str:
    """Minimise the objective held in the last row of T (reduced costs, rhs last column)."""
    m = T.shape[0] - 1
    for _ in range(max_iter):
        cost = T[-1, :-1]
        # Bland: lowest-index entering column with negative reduced cost
        candidates = np.flatnonzero((cost < -TOL) & allowed)
        if candidates.size == 0:
            return "optimal"
        col = int(candidates[0])
        column = T[:m, col]
        pos = column > TOL
        if not pos.any():
            return "unbounded"
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / column[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + TOL * max(1.0, abs(best)))
        # Bland: among ties leave with the lowest basic variable index
        row = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, row, col)
        basis[row] = col
    raise RuntimeError("simplex iteration limit reached")


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None) -> LPResult:
    """Minimise ``c @ x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``x >= 0``."""
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # columns: original | slacks for <= rows | artificials for every row
    A = np.zeros((m, n + m_ub))
    A[:m_ub, :n] = A_ub
    A[:m_ub, n:] = np.eye(m_ub)
    A[m_ub:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    n_struct = n + m_ub
    T = np.zeros((m + 1, n_struct + m + 1))
    T[:m, :n_struct] = A
    T[:m, n_struct:n_struct + m] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(n_struct, n_struct + m))
    # phase 1 objective: sum of artificials, expressed in reduced-cost form
    T[-1, :n_struct] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    allowed = np.ones(n_struct + m, dtype=bool)
    _run(T, basis, allowed)
    if -T[-1, -1] > 1e-9 * max(1.0, np.abs(b).max(initial=0.0)):
        return LPResult("infeasible", None, np.inf)

    # drive any artificial left in the basis (at zero) out, or drop its redundant row
    for i in range(m):
        if basis[i] >= n_struct:
            nz = np.flatnonzero(np.abs(T[i, :n_struct]) > TOL)
            if nz.size:
                _pivot(T, i, int(nz[0]))
                basis[i] = int(nz[0])
    keep = [i for i in range(m) if basis[i] < n_struct]
    T = np.vstack([T[keep], T[-1:]])
    basis = [basis[i] for i in keep]
    T = np.delete(T, np.s_[n_struct:n_struct + m], axis=1)

    # phase 2
    cost = np.zeros(n_struct)
    cost[:n] = c
    T[-1, :] = 0.0
    T[-1, :n_struct] = cost
    for i, j in enumerate(basis):
        T[-1] -= cost[j] * T[i]
    status = _run(T, basis, np.ones(n_struct, dtype=bool))
    if status != "optimal":
        return LPResult(status, None, -np.inf)
    x = np.zeros(n_struct)
    for i, j in enumerate(basis):
        x[j] = T[i, -1]
    x = np.maximum(x[:n], 0.0)
    return LPResult("optimal", x, float(c @ x))
