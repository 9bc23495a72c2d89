"""Dense two-phase primal simplex for tiny linear programs.

Solves::

    maximize    c @ x
    subject to  A_eq @ x == b_eq
                A_ub @ x <= b_ub
                x >= lb

Bland's rule is used for both the entering and the leaving variable, which
rules out cycling on degenerate vertices.  Problems here have a handful of
variables, so the tableau is rebuilt densely on every pivot.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LPError(ValueError):
    """Malformed linear program (inconsistent dimensions, non-finite data)."""


@dataclass
class LinearProgram:
    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lb: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        if n == 0:
            raise LPError("empty objective")

        def rows(A, b, what):
            if A is None and b is None:
                return np.zeros((0, n)), np.zeros(0)
            if A is None or b is None:
                raise LPError(f"{what}: matrix and right-hand side must be given together")
            A = np.atleast_2d(np.asarray(A, dtype=float))
            b = np.asarray(b, dtype=float).ravel()
            if A.shape != (b.size, n):
                raise LPError(f"{what}: expected shape ({b.size}, {n}), got {A.shape}")
            return A, b

        self.A_eq, self.b_eq = rows(self.A_eq, self.b_eq, "equality constraints")
        self.A_ub, self.b_ub = rows(self.A_ub, self.b_ub, "inequality constraints")
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        if self.lb.size != n:
            raise LPError("lower bounds must match the number of variables")
        for arr in (self.c, self.A_eq, self.b_eq, self.A_ub, self.b_ub, self.lb):
            if not np.all(np.isfinite(arr)):
                raise LPError("all coefficients must be finite")

    @property
    def n(self) -> int:
        return self.c.size


@dataclass
class LPResult:
    status: str            # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    value: float
    iterations: int = 0


def _pivot(T, row, col):
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]


def _simplex(T, basis, cost, tol, max_iter):
    """Maximize ``cost @ z`` on tableau ``T`` (rows = constraints, last col = rhs).

    Returns ``(status, iterations)``; ``T`` and ``basis`` are updated in place.
    """
    m, ncol = T.shape
    nvar = ncol - 1
    for it in range(max_iter):
        cb = cost[basis]
        reduced = cost[:nvar] - cb @ T[:, :nvar]
        entering = next((j for j in range(nvar) if reduced[j] > tol), None)
        if entering is None:
            return "optimal", it
        col = T[:, entering]
        best = None
        for i in range(m):
            if col[i] > tol:
                ratio = T[i, -1] / col[i]
                if (best is None or ratio < best[0] - tol
                        or (abs(ratio - best[0]) <= tol and basis[i] < basis[best[1]])):
                    best = (ratio, i)
        if best is None:
            return "unbounded", it
        _pivot(T, best[1], entering)
        basis[best[1]] = entering
    raise RuntimeError("simplex iteration limit reached")


def solve_lp(lp: LinearProgram, tol: float = 1e-9, max_iter: int = 10_000) -> LPResult:
    """Solve ``lp``; infeasible and unbounded programs are reported via ``status``."""
    n = lp.n
    # shift to y = x - lb >= 0
    b_eq = lp.b_eq - lp.A_eq @ lp.lb
    b_ub = lp.b_ub - lp.A_ub @ lp.lb
    m_eq, m_ub = b_eq.size, b_ub.size
    m = m_eq + m_ub
    if m == 0:
        if np.any(lp.c > tol):
            return LPResult("unbounded", None, np.inf)
        return LPResult("optimal", lp.lb.copy(), float(lp.c @ lp.lb))

    # standard form [A_eq 0; A_ub I] z = b, z = (y, slack) >= 0
    nz = n + m_ub
    A = np.zeros((m, nz))
    A[:m_eq, :n] = lp.A_eq
    A[m_eq:, :n] = lp.A_ub
    A[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([b_eq, b_ub])
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # phase 1: one artificial per row
    T = np.zeros((m, nz + m + 1))
    T[:, :nz] = A
    T[:, nz:nz + m] = np.eye(m)
    T[:, -1] = b
    basis = list(range(nz, nz + m))
    cost1 = np.zeros(nz + m)
    cost1[nz:] = -1.0
    _, it1 = _simplex(T, basis, cost1, tol, max_iter)
    infeas = T[:, -1][[i for i, j in enumerate(basis) if j >= nz]].sum()
    scale = max(1.0, float(np.max(np.abs(b))))
    if infeas > tol * scale * 10:
        return LPResult("infeasible", None, -np.inf, it1)

    # drive remaining (zero-level) artificials out of the basis
    keep = []
    for i in range(m):
        if basis[i] >= nz:
            j = next((j for j in range(nz) if abs(T[i, j]) > tol), None)
            if j is None:
                continue                       # redundant row
            _pivot(T, i, j)
            basis[i] = j
        keep.append(i)
    T = np.hstack([T[keep, :nz], T[keep, -1:]])
    basis = [basis[i] for i in keep]

    # phase 2
    cost2 = np.zeros(nz)
    cost2[:n] = lp.c
    status, it2 = _simplex(T, basis, cost2, tol, max_iter)
    if status == "unbounded":
        return LPResult("unbounded", None, np.inf, it1 + it2)
    z = np.zeros(nz)
    for i, j in enumerate(basis):
        z[j] = T[i, -1]
    x = np.maximum(z[:n], 0.0) + lp.lb
    return LPResult("optimal", x, float(lp.c @ x), it1 + it2)
