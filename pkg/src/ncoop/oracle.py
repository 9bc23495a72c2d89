"""Brute-force reference computations used to validate the optimizers.

Nothing here calls into the solvers it checks; the only shared code is the
closed-form rate evaluation, which is itself cross-checked against an
explicit vector computation in the beamforming tests.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .channel import NarrowbandGains, PowerBudget
from .lp import LinearProgram
from .narrowband import PowerAllocation


class NoSampleError(RuntimeError):
    """No lattice point fell into the requested rate bin."""


def _bts_pairs(P, n):
    """Lattice points ``(P_1k, P_2k)`` with step ``P/(n-1)`` and ``P_1k + P_2k <= P``."""
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    keep = (i + j) <= n - 1
    step = P / (n - 1)
    return i[keep] * step, j[keep] * step


def lattice_rates(g, budget, n_grid):
    """Rates of every lattice allocation; returns ``(R1, R2, pairs1, pairs2)``.

    ``R1`` and ``R2`` have shape ``(len(pairs1), len(pairs2))``: rows index
    the BTS 1 split ``(P11, P21)``, columns the BTS 2 split ``(P12, P22)``.
    """
    if n_grid < 2:
        raise ValueError("n_grid must be at least 2")
    g = NarrowbandGains.from_seq(g)
    b = PowerBudget.from_seq(budget)
    P11, P21 = _bts_pairs(b.P1, n_grid)
    P12, P22 = _bts_pairs(b.P2, n_grid)
    s1 = (g.g11 * P11)[:, None] + (g.g12 * P12)[None, :]
    i1 = (g.g11 * P21)[:, None] + (g.g12 * P22)[None, :]
    s2 = (g.g21 * P21)[:, None] + (g.g22 * P22)[None, :]
    i2 = (g.g21 * P11)[:, None] + (g.g22 * P12)[None, :]
    R1 = np.log2(1.0 + s1 / (1.0 + i1))
    R2 = np.log2(1.0 + s2 / (1.0 + i2))
    return R1, R2, (P11, P21), (P12, P22)


def _alloc(pairs1, pairs2, r, c):
    return PowerAllocation(pairs1[0][r], pairs1[1][r], pairs2[0][c], pairs2[1][c])


def grid_frontier(g, budget, R1_target, n_grid=60, reduction="lemma1", bin_width=0.5,
                  lattice=None):
    """Oracle for the largest ``R2`` at ``R1 = R1_target``; returns ``(R2, allocation)``.

    ``reduction="lemma1"`` enumerates the structural families every frontier
    allocation belongs to: both BTSs at full power, or each BTS serving a
    single mobile.  Each family has two free powers; one runs over an
    ``n_grid`` lattice and the other is solved from the (linear) ``R1``
    equation, in both orientations.

    ``reduction="none"`` scans the raw ``n_grid**4`` lattice and keeps lattice
    points with ``R1`` in the one-sided bin ``[target, target + bin_width]``.
    Lowering mobile 1's powers lowers ``R1`` continuously while raising
    ``R2``, so this is a lower bound whose error is lattice resolution.
    """
    if n_grid < 10:
        raise ValueError("n_grid must be at least 10")
    if reduction == "lemma1":
        return _reduced_frontier(g, budget, R1_target, n_grid)
    if reduction != "none":
        raise ValueError(f"unknown reduction {reduction!r}")
    R1, R2, pairs1, pairs2 = lattice if lattice is not None else lattice_rates(g, budget, n_grid)
    width = bin_width
    for _ in range(3):
        mask = (R1 >= R1_target - 1e-12) & (R1 <= R1_target + width)
        if mask.any():
            masked = np.where(mask, R2, -np.inf)
            flat = int(np.argmax(masked))
            r, c = np.unravel_index(flat, R2.shape)
            return float(R2[r, c]), _alloc(pairs1, pairs2, r, c)
        width *= 4.0
    raise NoSampleError(f"no lattice allocation reaches R1 in [{R1_target}, {R1_target + width}]")


def _family(fam, x, y, P1, P2):
    """Allocation ``(P11, P21, P12, P22)`` of a frontier-structure family.

    Family 0 is full power with ``x = P11`` and ``y = P12``.  Families 1-4
    are exclusive: BTS 1 sends ``x`` to one mobile, BTS 2 sends ``y`` to one.
    """
    z = np.zeros_like(x)
    return {
        0: (x, P1 - x, y, P2 - y),
        1: (x, z, y, z),
        2: (x, z, z, y),
        3: (z, x, y, z),
        4: (z, x, z, y),
    }[fam]


def _reduced_frontier(g, budget, R1_target, n_grid):
    g = NarrowbandGains.from_seq(g)
    b = PowerBudget.from_seq(budget)
    t = math.expm1(R1_target * math.log(2.0))
    lat = {"x": np.linspace(0.0, b.P1, n_grid), "y": np.linspace(0.0, b.P2, n_grid)}
    cap = {"x": b.P2, "y": b.P1}

    def residual(fam, which, fixed, free):
        # signal - t * (1 + interference); affine in the free power
        free = np.full_like(fixed, free)
        x, y = (fixed, free) if which == "x" else (free, fixed)
        P11, P21, P12, P22 = _family(fam, x, y, b.P1, b.P2)
        return g.g11 * P11 + g.g12 * P12 - t * (1.0 + g.g11 * P21 + g.g12 * P22)

    best = (-math.inf, None)
    for fam in range(5):
        for which in ("x", "y"):
            fixed = lat[which]
            r0 = residual(fam, which, fixed, 0.0)
            slope = residual(fam, which, fixed, 1.0) - r0
            with np.errstate(divide="ignore", invalid="ignore"):
                free = -r0 / slope
            ok = (slope != 0) & np.isfinite(free) & (free >= -1e-12) & (free <= cap[which] + 1e-12)
            if not ok.any():
                continue
            fx, fr = fixed[ok], np.clip(free[ok], 0.0, cap[which])
            x, y = (fx, fr) if which == "x" else (fr, fx)
            P = np.stack(_family(fam, x, y, b.P1, b.P2), axis=-1)
            R1, R2 = _rates(g, P)
            good = np.abs(R1 - R1_target) <= 1e-9 * max(1.0, R1_target)
            if not good.any():
                continue
            k = int(np.argmax(np.where(good, R2, -np.inf)))
            if R2[k] > best[0]:
                best = (float(R2[k]), PowerAllocation(*P[k]))
    if best[1] is None:
        raise NoSampleError(f"no family allocation reaches R1 = {R1_target}")
    return best


def _rates(g, P):
    g11, g21, g12, g22 = g.as_array()
    P11, P21, P12, P22 = P.T
    R1 = np.log2(1.0 + (g11 * P11 + g12 * P12) / (1.0 + g11 * P21 + g12 * P22))
    R2 = np.log2(1.0 + (g21 * P21 + g22 * P22) / (1.0 + g21 * P11 + g22 * P12))
    return R1, R2


def grid_sum_rate(g, budget, mu, n_grid=80):
    """Lattice maximum of ``R1 + mu * R2``; returns ``(rate, PowerAllocation)``."""
    R1, R2, pairs1, pairs2 = lattice_rates(g, budget, n_grid)
    W = R1 + mu * R2
    flat = int(np.argmax(W))
    r, c = np.unravel_index(flat, W.shape)
    return float(W[r, c]), _alloc(pairs1, pairs2, r, c)


def finite_diff_stationarity(f, x, h=1e-5, lower=None, upper=None):
    """Central-difference gradient of ``f`` at ``x``.

    Coordinates whose central stencil would leave ``[lower, upper]`` (or
    where ``f`` fails or returns NaN) fall back to a one-sided difference.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lo = np.full(x.shape, -np.inf) if lower is None else np.broadcast_to(lower, x.shape)
    hi = np.full(x.shape, np.inf) if upper is None else np.broadcast_to(upper, x.shape)

    def ev(z):
        try:
            v = float(f(z if z.size > 1 else z[0]))
        except (ValueError, ArithmeticError):
            return math.nan
        return v

    f0 = ev(x)
    grad = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        up_ok = x[k] + h <= hi[k]
        dn_ok = x[k] - h >= lo[k]
        fp = ev(x + e) if up_ok else math.nan
        fm = ev(x - e) if dn_ok else math.nan
        if not math.isnan(fp) and not math.isnan(fm):
            grad[k] = (fp - fm) / (2 * h)
        elif not math.isnan(fp):
            grad[k] = (fp - f0) / h
        elif not math.isnan(fm):
            grad[k] = (f0 - fm) / h
        else:
            grad[k] = math.nan
    return grad


def _constraint_rows(lp: LinearProgram):
    n = lp.n
    rows = [(lp.A_ub[i], lp.b_ub[i]) for i in range(lp.b_ub.size)]
    rows += [(-np.eye(n)[i], -lp.lb[i]) for i in range(n)]
    return rows


def simplex_vertex_enum(lp: LinearProgram, tol=1e-9):
    """Optimal value of ``lp`` by enumerating every basic feasible solution.

    Returns ``(status, value, x)``.  Unboundedness is detected by looking for
    an extreme ray of the recession cone along which the objective grows.
    """
    n = lp.n
    if lp.b_eq.size + lp.b_ub.size > 8:
        raise ValueError("vertex enumeration is limited to 8 constraints")
    ineq = _constraint_rows(lp)
    m_eq = lp.b_eq.size
    need = n - m_eq
    best = None
    scale = 1.0 + max(np.max(np.abs(lp.b_eq), initial=0.0), np.max(np.abs(lp.b_ub), initial=0.0))
    for combo in itertools.combinations(range(len(ineq)), need):
        A = np.vstack([lp.A_eq] + [ineq[i][0][None, :] for i in combo]) if n else None
        b = np.concatenate([lp.b_eq, [ineq[i][1] for i in combo]])
        if np.linalg.matrix_rank(A, tol=1e-10) < n:
            continue
        x = np.linalg.solve(A, b)
        if np.any(np.abs(lp.A_eq @ x - lp.b_eq) > tol * scale * 100):
            continue
        if np.any(lp.A_ub @ x - lp.b_ub > tol * scale * 100) or np.any(x < lp.lb - tol * scale * 100):
            continue
        v = float(lp.c @ x)
        if best is None or v > best[0]:
            best = (v, x)
    if best is None:
        return "infeasible", -math.inf, None

    # recession cone: A_eq d = 0, A_ub d <= 0, d >= 0
    cone = [(r, 0.0) for r, _ in ineq]
    for combo in itertools.combinations(range(len(cone)), max(need - 1, 0)):
        A = np.vstack([lp.A_eq] + [cone[i][0][None, :] for i in combo]) if (m_eq or combo) else np.zeros((0, n))
        if A.shape[0] and np.linalg.matrix_rank(A, tol=1e-10) != n - 1:
            continue
        _, _, vt = np.linalg.svd(A if A.shape[0] else np.zeros((1, n)))
        d = vt[-1]
        for sgn in (1.0, -1.0):
            dd = sgn * d
            if (np.all(np.abs(lp.A_eq @ dd) <= 1e-9) and np.all(lp.A_ub @ dd <= 1e-9)
                    and np.all(dd >= -1e-9) and lp.c @ dd > 1e-9):
                return "unbounded", math.inf, None
    return "optimal", best[0], best[1]


def grid_lagrangian(rate_fn, lam1, lam2, upper=20.0, n=400):
    """Brute-force ``max rate_fn(P1, P2) - lam1*P1 - lam2*P2`` on an ``n x n`` grid.

    ``rate_fn`` must accept broadcast arrays.  Returns ``(value, P1, P2)``.
    """
    p = np.linspace(0.0, upper, n)
    P1, P2 = np.meshgrid(p, p, indexing="ij")
    V = rate_fn(P1, P2) - lam1 * P1 - lam2 * P2
    k = int(np.argmax(V))
    r, c = np.unravel_index(k, V.shape)
    return float(V[r, c]), float(P1[r, c]), float(P2[r, c])


def grid_two_carrier(rate_fn, gains, budgets, n=201):
    """Brute force over two subcarriers sharing both BTS budgets.

    ``rate_fn(g, P1, P2)`` is the per-subcarrier weighted rate.  Carrier 1
    gets ``(a * Ptot1, b * Ptot2)`` and carrier 2 the rest, for ``a, b`` on
    an ``n``-point grid in ``[0, 1]``.  Returns ``(value, a, b)``.
    """
    t = np.linspace(0.0, 1.0, n)
    A, B = np.meshgrid(t, t, indexing="ij")
    P1, P2 = budgets
    v = (rate_fn(gains[0], A * P1, B * P2) + rate_fn(gains[1], (1 - A) * P1, (1 - B) * P2))
    k = int(np.argmax(v))
    r, c = np.unravel_index(k, v.shape)
    return float(v[r, c]), float(A[r, c]), float(B[r, c])
