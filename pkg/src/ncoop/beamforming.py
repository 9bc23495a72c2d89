"""Cooperative transmit beamforming with ``Nt >= 2`` antennas per BTS.

Stream ``jk`` (BTS ``k`` to mobile ``j``) uses a unit beamformer in the plane
of ``h_jk`` and the cross channel ``h_j'k`` of the other mobile.  The beam is
described by its angle ``beta_jk`` to the cross channel; with
``alpha_k`` the angle between the two channels of BTS ``k``,

    |h_jk^H v|^2  = g_jk  cos^2(beta_jk - alpha_k)
    |h_j'k^H v|^2 = g_j'k cos^2(beta_jk)

so ``beta = alpha`` is maximum-ratio and ``beta = pi/2`` zero-forcing.
Angles below ``alpha`` lose signal and add interference, so every search
here restricts ``beta`` to ``[alpha, pi/2]``.

Weighted-sum-rate maximization works on six normalized coordinates in
``[0, 1]``: the two per-BTS power splits ``P_1k / P_k`` and the four angle
positions ``t`` with ``beta = alpha + t (pi/2 - alpha)``.  Both optimizers
are batched over arbitrary leading dimensions so the wideband dual can
solve thousands of subcarrier problems per call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelError, MisoChannel, PowerBudget, WidebandChannel
from .narrowband import RatePair
from .wideband import LN2, WidebandAllocation, _bisect, _check_monotone, _mix_weight, effective_L

HALF_PI = 0.5 * math.pi
DEGENERATE = 1e-8
STREAMS = ("11", "21", "12", "22")


@dataclass(frozen=True)
class BeamConfig:
    """Beam angles and stream powers, both in ``(11, 21, 12, 22)`` order."""

    beta11: float
    beta21: float
    beta12: float
    beta22: float
    P11: float
    P21: float
    P12: float
    P22: float
    alpha1: float = math.nan
    alpha2: float = math.nan

    def __post_init__(self):
        for name in ("beta11", "beta21", "beta12", "beta22"):
            b = getattr(self, name)
            if not (-1e-12 <= b <= HALF_PI + 1e-12):
                raise ValueError(f"{name} must lie in [0, pi/2], got {b}")
        for name in ("P11", "P21", "P12", "P22"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def betas(self) -> np.ndarray:
        return np.array([self.beta11, self.beta21, self.beta12, self.beta22])

    @property
    def powers(self) -> np.ndarray:
        return np.array([self.P11, self.P21, self.P12, self.P22])

    @classmethod
    def from_arrays(cls, betas, powers, alphas=(math.nan, math.nan)) -> "BeamConfig":
        # absorb round-off only; real range violations still raise
        b = [float(min(max(x, 0.0), HALF_PI)) if -1e-9 <= x <= HALF_PI + 1e-9 else float(x)
             for x in betas]
        p = [float(max(x, 0.0)) if x >= -1e-9 else float(x) for x in powers]
        return cls(*b, *p, float(alphas[0]), float(alphas[1]))

    def as_row(self) -> np.ndarray:
        return np.concatenate([self.betas, self.powers])


def _unit(v):
    n = np.linalg.norm(v)
    if n == 0:
        raise ChannelError("channel vector must be nonzero")
    return v / n


def _orthogonal_unit(h):
    """Some unit vector orthogonal to unit vector ``h``."""
    e = np.zeros_like(h)
    e[int(np.argmin(np.abs(h)))] = 1.0
    q = e - h * np.vdot(h, e)
    return q / np.linalg.norm(q)


def beamformer_from_angle(h_own, h_cross, beta) -> np.ndarray:
    """Unit beam at angle ``beta`` from the cross channel, in the plane of both channels.

    ``v = cos(beta) e_par + sin(beta) e_perp`` with ``e_par``/``e_perp`` the
    normalized projections of the own-channel direction onto and away from
    the cross channel.  For (near) parallel channels ``e_perp`` is any unit
    vector orthogonal to them, for (near) orthogonal ones ``e_par`` is the
    cross direction, so both gain identities hold for every ``beta``.
    """
    h_own = np.asarray(h_own, dtype=complex).ravel()
    h_cross = np.asarray(h_cross, dtype=complex).ravel()
    if h_own.shape != h_cross.shape or h_own.size < 2:
        raise ChannelError("channel vectors must have equal length >= 2")
    if not (0.0 <= beta <= HALF_PI + 1e-12):
        raise ValueError("beta must lie in [0, pi/2]")
    u = _unit(h_own)
    c = _unit(h_cross)
    par = c * np.vdot(c, u)                    # Pi_c u; norm cos(alpha)
    perp = u - par                             # Pi_c^perp u; norm sin(alpha)
    npar = np.linalg.norm(par)
    nperp = np.linalg.norm(perp)
    e_par = par / npar if npar > DEGENERATE else c
    e_perp = perp / nperp if nperp > DEGENERATE else _orthogonal_unit(u)
    return math.cos(beta) * e_par + math.sin(beta) * e_perp


def stream_beamformers(ch: MisoChannel, betas) -> np.ndarray:
    """Beams of the four streams as rows of a ``(4, Nt)`` array."""
    H = ch.as_array()                          # rows h11, h21, h12, h22
    own_cross = ((0, 1), (1, 0), (2, 3), (3, 2))
    return np.stack([beamformer_from_angle(H[o], H[c], b) for (o, c), b in zip(own_cross, betas)])


def rate_terms(g, alpha, beta, P, mu=None):
    """Vectorized rate pair of the beamformed scheme.

    Trailing axes: ``g`` 4, ``alpha`` 2, ``beta`` 4, ``P`` 4, all broadcasting.
    Returns ``(R1, R2)``, or ``R1 + mu R2`` when ``mu`` is given.
    """
    g11, g21, g12, g22 = (g[..., i] for i in range(4))
    a1, a2 = alpha[..., 0], alpha[..., 1]
    b11, b21, b12, b22 = (beta[..., i] for i in range(4))
    P11, P21, P12, P22 = (P[..., i] for i in range(4))
    c = np.cos
    S1 = g11 * c(b11 - a1) ** 2 * P11 + g12 * c(b12 - a2) ** 2 * P12
    I1 = g11 * c(b21) ** 2 * P21 + g12 * c(b22) ** 2 * P22
    S2 = g21 * c(b21 - a1) ** 2 * P21 + g22 * c(b22 - a2) ** 2 * P22
    I2 = g21 * c(b11) ** 2 * P11 + g22 * c(b12) ** 2 * P12
    R1 = np.log2(1.0 + S1 / (1.0 + I1))
    R2 = np.log2(1.0 + S2 / (1.0 + I2))
    if mu is None:
        return R1, R2
    return R1 + mu * R2


def rate_pair_bf(ch: MisoChannel, cfg: BeamConfig) -> RatePair:
    g = ch.gains.as_array()
    alpha = np.array([ch.alpha1, ch.alpha2])
    R1, R2 = rate_terms(g, alpha, cfg.betas, cfg.powers)
    return RatePair(float(R1), float(R2))


def rate_pair_vectors(ch: MisoChannel, cfg: BeamConfig) -> RatePair:
    """Rate pair from explicit beam vectors and inner products."""
    V = stream_beamformers(ch, cfg.betas)
    H = ch.as_array()
    P = cfg.powers
    # received power at mobile j from stream (m, k): |h_jk^H v_mk|^2 P_mk
    def rx(j, m, k):
        return abs(np.vdot(H[STREAMS.index(f"{j}{k}")], V[STREAMS.index(f"{m}{k}")])) ** 2 \
            * P[STREAMS.index(f"{m}{k}")]
    S1 = rx(1, 1, 1) + rx(1, 1, 2)
    I1 = rx(1, 2, 1) + rx(1, 2, 2)
    S2 = rx(2, 2, 1) + rx(2, 2, 2)
    I2 = rx(2, 1, 1) + rx(2, 1, 2)
    return RatePair(math.log2(1 + S1 / (1 + I1)), math.log2(1 + S2 / (1 + I2)))


# -- normalized coordinates -------------------------------------------------

def _decode(X, alpha, S1, S2, fixed_t=None):
    """Six coordinates -> (beta, P), broadcasting over leading axes."""
    s1, s2 = X[..., 0], X[..., 1]
    t = X[..., 2:6] if fixed_t is None else np.broadcast_to(fixed_t, X[..., 2:6].shape)
    a = np.stack([alpha[..., 0], alpha[..., 0], alpha[..., 1], alpha[..., 1]], axis=-1)
    beta = a + t * (HALF_PI - a)
    P = np.stack([s1 * S1, (1.0 - s1) * S1, s2 * S2, (1.0 - s2) * S2], axis=-1)
    return beta, P


def _objective(g, alpha, S1, S2, mu, fixed_t=None):
    def f(X):
        beta, P = _decode(X, alpha, S1, S2, fixed_t)
        return rate_terms(g, alpha, beta, P, mu)
    return f


def _line_search(f, X, cur, coord, n_grid, n_refine):
    """Global 1-D grid then shrinking local grids on one coordinate, batched."""
    shape = X.shape[:-1]
    pts = np.linspace(0.0, 1.0, n_grid)
    best_x = X[..., coord].copy()
    best_v = cur.copy()
    spacing = 1.0 / (n_grid - 1)
    for r in range(n_refine + 1):
        if r == 0:
            cand = np.broadcast_to(pts, shape + (n_grid,))
        else:
            off = np.linspace(-spacing, spacing, 5)
            cand = np.clip(best_x[..., None] + off, 0.0, 1.0)
            spacing /= 2.0
        k = cand.shape[-1]
        Xc = np.repeat(X[..., None, :], k, axis=-2)
        Xc[..., coord] = cand
        v = f(Xc)
        j = np.argmax(v, axis=-1)
        vj = np.take_along_axis(v, j[..., None], axis=-1)[..., 0]
        xj = np.take_along_axis(cand, j[..., None], axis=-1)[..., 0]
        better = vj > best_v
        best_x = np.where(better, xj, best_x)
        best_v = np.where(better, vj, best_v)
    X = X.copy()
    X[..., coord] = best_x
    return X, best_v


@dataclass
class BFSearchConfig:
    """Resolution of the beamforming searches.

    ``iterative``: alternate the two power splits and the four angles, each a
    1-D search with ``line_grid`` global points and ``line_refine`` local
    rounds, until a sweep gains less than ``tol``.  ``exhaustive``: full
    6-D grid with ``grid_points`` per axis and ``grid_refine`` local
    re-gridding rounds ("exhaustive-coarse").
    """

    line_grid: int = 17
    line_refine: int = 4
    tol: float = 1e-6
    max_sweeps: int = 60
    grid_points: int = 13
    grid_refine: int = 2
    fixed_beta: float | None = None
    chunk: int = 400_000


# (split1, split2, angle position): zero-forcing beams with assorted power
# splits, plus maximum-ratio beams with everything sent to one mobile
STARTS = ((0.5, 0.5, 1.0), (1.0, 0.0, 1.0), (0.0, 1.0, 1.0), (1.0, 1.0, 1.0), (0.0, 0.0, 1.0),
          (1.0, 1.0, 0.0), (0.0, 0.0, 0.0))


def _starts(n, starts=STARTS):
    """Start points of shape ``(len(starts), n, 6)``."""
    X = np.empty((len(starts), n, 6))
    for i, (s1, s2, t) in enumerate(starts):
        X[i, :, 0] = s1
        X[i, :, 1] = s2
        X[i, :, 2:6] = t
    return X


def _iterate(make_f, X, cfg: BFSearchConfig, coords):
    """Coordinate sweeps on a flat batch ``X`` of shape ``(B, d)``.

    Problems that gain less than ``cfg.tol`` in a sweep are frozen, so the
    cost tracks the slowest problems only.  ``make_f(idx, extra_axis)``
    builds the objective restricted to batch rows ``idx``.
    """
    B = X.shape[0]
    cur = make_f(np.arange(B), False)(X)
    active = np.arange(B)
    for _ in range(cfg.max_sweeps):
        if active.size == 0:
            break
        f = make_f(active, True)
        Xa = X[active]
        start = cur[active]
        ca = start.copy()
        for c in coords:
            Xa, ca = _line_search(f, Xa, ca, c, cfg.line_grid, cfg.line_refine)
        X[active] = Xa
        cur[active] = ca
        active = active[ca - start >= cfg.tol]
    return X, cur


def optimize_batch(g, alpha, S1, S2, mu, cfg: BFSearchConfig | None = None, X0=None):
    """Batched iterative maximization of ``R1 + mu R2`` at full power ``(S1, S2)``.

    Runs from zero-forcing angles with equal and corner power splits and
    from maximum-ratio full cooperation toward either mobile (or from
    ``X0`` when given), keeping the best result per problem.
    Returns ``(value, X)`` with ``X`` the normalized coordinates.
    """
    cfg = cfg or BFSearchConfig()
    g = np.asarray(g, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    S1 = np.asarray(S1, dtype=float)
    S2 = np.asarray(S2, dtype=float)
    shape = np.broadcast_shapes(g.shape[:-1], alpha.shape[:-1], S1.shape, S2.shape)
    n = int(np.prod(shape))
    g = np.broadcast_to(g, shape + (4,)).reshape(n, 4)
    alpha = np.broadcast_to(alpha, shape + (2,)).reshape(n, 2)
    S1 = np.broadcast_to(S1, shape).reshape(n)
    S2 = np.broadcast_to(S2, shape).reshape(n)
    fixed_t = None
    coords = range(6)
    if cfg.fixed_beta is not None:
        fixed_t = _fixed_t(alpha, cfg.fixed_beta)
        coords = (0, 1)
    if X0 is not None:
        starts = np.broadcast_to(np.asarray(X0, dtype=float), shape + (6,)).reshape(1, n, 6)
    else:
        starts = _starts(n)
    m = starts.shape[0]
    # stack the starts along the batch axis
    gg, aa = np.tile(g, (m, 1)), np.tile(alpha, (m, 1))
    s1, s2 = np.tile(S1, m), np.tile(S2, m)
    ft = None if fixed_t is None else np.tile(fixed_t, (m, 1))

    def make_f(idx, extra):
        if extra:
            return _objective(gg[idx, None, :], aa[idx, None, :], s1[idx, None], s2[idx, None],
                              mu, None if ft is None else ft[idx, None, :])
        return _objective(gg[idx], aa[idx], s1[idx], s2[idx], mu, None if ft is None else ft[idx])

    X, cur = _iterate(make_f, starts.reshape(m * n, 6).copy(), cfg, coords)
    cur = cur.reshape(m, n)
    X = X.reshape(m, n, 6)
    k = np.argmax(cur, axis=0)
    best = cur[k, np.arange(n)]
    Xb = X[k, np.arange(n)]
    return best.reshape(shape), Xb.reshape(shape + (6,))


def _fixed_t(alpha, beta):
    """Angle positions ``t`` that pin every beam at ``beta``."""
    a = np.stack([alpha[..., 0], alpha[..., 0], alpha[..., 1], alpha[..., 1]], axis=-1)
    span = HALF_PI - a
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(span > 0, np.clip((beta - a) / np.where(span > 0, span, 1.0), 0.0, 1.0), 1.0)


def _exhaustive_single(g, alpha, S1, S2, mu, cfg: BFSearchConfig):
    """Coarse 6-D grid with local re-gridding on one problem."""
    n = cfg.grid_points
    lo = np.zeros(6)
    hi = np.ones(6)
    f = _objective(g, alpha, S1, S2, mu)
    best_v, best_x = -np.inf, None
    fixed = cfg.fixed_beta is not None
    for r in range(cfg.grid_refine + 1):
        axes = [np.linspace(lo[i], hi[i], n) for i in range(6)]
        if fixed:
            t = _fixed_t(alpha, cfg.fixed_beta)
            for i in range(4):
                axes[2 + i] = np.array([t[i]])
        sizes = [len(a) for a in axes]
        total = int(np.prod(sizes))
        step = max(1, cfg.chunk)
        for start in range(0, total, step):
            idx = np.arange(start, min(total, start + step))
            sub = np.unravel_index(idx, sizes)
            X = np.stack([axes[i][sub[i]] for i in range(6)], axis=-1)
            v = f(X)
            k = int(np.argmax(v))
            if v[k] > best_v:
                best_v, best_x = float(v[k]), X[k].copy()
        width = np.array([(hi[i] - lo[i]) / (n - 1) for i in range(6)])
        lo = np.clip(best_x - width, 0.0, 1.0)
        hi = np.clip(best_x + width, 0.0, 1.0)
    return best_v, best_x


@dataclass
class BFResult:
    rate: float
    config: BeamConfig
    method: str
    globally_optimal: bool
    sweeps: int = 0


def _config_from_X(X, alpha, S1, S2, fixed_t=None):
    beta, P = _decode(np.asarray(X)[None, :], np.asarray(alpha)[None, :], np.array([S1]),
                      np.array([S2]), fixed_t)
    return BeamConfig.from_arrays(beta[0], P[0], alpha)


def max_weighted_sum_rate_bf(ch: MisoChannel, budget, mu: float, method: str = "iterative",
                             cfg: BFSearchConfig | None = None) -> BFResult:
    """Best ``R1 + mu R2`` over four angles and two power splits, both BTSs at full power.

    ``iterative`` (default) is a heuristic; ``exhaustive`` is a coarse 6-D
    grid with local refinement.  Neither certifies global optimality.
    """
    cfg = cfg or BFSearchConfig()
    b = PowerBudget.from_seq(budget)
    g = ch.gains.as_array()
    alpha = np.array([ch.alpha1, ch.alpha2])
    if method == "iterative":
        v, X = optimize_batch(g, alpha, b.P1, b.P2, mu, cfg)
        X = np.asarray(X)
    elif method == "exhaustive":
        v, X = _exhaustive_single(g, alpha, b.P1, b.P2, mu, cfg)
    else:
        raise ValueError("method must be 'iterative' or 'exhaustive'")
    fixed_t = None if cfg.fixed_beta is None else _fixed_t(alpha, cfg.fixed_beta)[None]
    conf = _config_from_X(X, alpha, b.P1, b.P2, fixed_t)
    rate = rate_pair_bf(ch, conf).weighted(mu)
    return BFResult(rate=rate, config=conf, method=method, globally_optimal=False)


def frontier_bf(ch: MisoChannel, budget, mu_list, cfg: BFSearchConfig | None = None):
    """One weighted-sum-rate maximizer per weight; returns ``[(mu, RatePair, BeamConfig)]``."""
    mus = [float(m) for m in mu_list]
    if not mus or any(m < 0 or not math.isfinite(m) for m in mus):
        raise ValueError("mu_list must be nonempty with finite values >= 0")
    cfg = cfg or BFSearchConfig()
    b = PowerBudget.from_seq(budget)
    out = []
    for m in mus:
        res = max_weighted_sum_rate_bf(ch, b, m, "iterative", cfg)
        out.append((m, rate_pair_bf(ch, res.config), res.config))
    return out


# -- wideband beamforming dual -------------------------------------------------

@dataclass
class BudgetGrid:
    """Per-subcarrier budget lattice used by the wideband beamforming dual.

    Each axis is ``0`` plus ``n_log`` geometric and ``n_lin`` uniform points
    on ``(0, cap]`` with ``cap = min(Ptot_k, cap_factor Ptot_k / L_eff)``.
    ``refine_rounds`` pattern-search rounds polish the final allocation.
    """

    n_log: int = 5
    n_lin: int = 5
    log_floor: float = 1e-2
    cap_factor: float = 4.0
    refine_rounds: int = 8
    search: BFSearchConfig | None = None

    def axis(self, cap):
        u = np.geomspace(self.log_floor, 1.0, self.n_log)
        v = np.linspace(0.0, 1.0, self.n_lin + 1)
        base = np.unique(np.concatenate([u, v]))
        return np.asarray(cap, dtype=float)[..., None] * base


def _bf_search_default():
    return BFSearchConfig(line_grid=9, line_refine=3, tol=1e-5)


def wideband_bf_dual_solve(ch: WidebandChannel, budgets, mu=1.0, eps_lambda=1e-6,
                           cfg: BFSearchConfig | None = None, grid: BudgetGrid | None = None,
                           monotone_rtol=1e-6) -> WidebandAllocation:
    """Cooperative beamforming and power allocation over ``L`` MISO subcarriers.

    The per-subcarrier value ``Rmax(S1, S2)`` (best weighted rate with BTS
    ``k`` spending ``S_k`` on that subcarrier) is tabulated on a budget
    lattice, which fixes the candidate set of the nested bisection on
    ``(lambda1, lambda2)``.  At the final multipliers the chosen budgets are
    refined off-lattice, scaled to spend both totals exactly, and the beams
    re-optimized.  ``cfg.fixed_beta`` pins every beam angle (for example
    ``pi/2`` for zero-forcing only).
    """
    if ch.mode != "miso":
        raise ChannelError("wideband_bf_dual_solve needs a MISO-mode channel")
    b = PowerBudget.from_seq(budgets)
    if b.P1 <= 0 or b.P2 <= 0:
        raise ValueError("budgets must be positive")
    grid = grid or BudgetGrid()
    scfg = cfg or grid.search or _bf_search_default()
    g = ch.gains
    alpha = ch.alphas
    L = ch.L
    Leff = effective_L(g)
    cap1 = min(b.P1, grid.cap_factor * b.P1 / Leff)
    cap2 = min(b.P2, grid.cap_factor * b.P2 / Leff)
    ax1 = grid.axis(np.full(L, cap1))
    ax2 = grid.axis(np.full(L, cap2))
    n = ax1.shape[1]
    S1 = np.broadcast_to(ax1[:, :, None], (L, n, n))
    S2 = np.broadcast_to(ax2[:, None, :], (L, n, n))
    F, X = optimize_batch(g[:, None, None, :], alpha[:, None, None, :], S1, S2, mu, scfg)
    F = F.reshape(L, -1)
    X = X.reshape(L, -1, 6)
    C1 = S1.reshape(L, -1)
    C2 = S2.reshape(L, -1)
    rows = np.arange(L)
    lam_max = (1.0 + mu) * float(np.max(g)) / LN2 + 1e-12
    trace = []

    def evaluate(l1, l2):
        V = F - l1 * C1 - l2 * C2
        k = np.argmax(V, axis=1)
        dual = float(V[rows, k].sum() + l1 * b.P1 + l2 * b.P2)
        trace.append((l1, l2, float(C1[rows, k].sum()), float(C2[rows, k].sum()), dual))
        return k, dual

    mixed = []

    def inner(l1):
        def total2(l2):
            k, _ = evaluate(l1, l2)
            return float(C2[rows, k].sum()), k
        l2, k, tr, over = _bisect(total2, b.P2, lam_max, eps_lambda)
        _check_monotone(tr, b.P2, "BTS 2", monotone_rtol)
        t = _mix_weight(float(C2[rows, k].sum()), None if over is None else over[0], b.P2)
        p1 = float(C1[rows, k].sum())
        mixed.append((l1, t * p1 + (1.0 - t) * (float(C1[rows, over[1]].sum()) if over else p1)))
        return l2, k

    def total1(l1):
        l2, k = inner(l1)
        return float(C1[rows, k].sum()), (l2, k)

    l1, (l2, k), _, _ = _bisect(total1, b.P1, lam_max, eps_lambda)
    _check_monotone(mixed, b.P1, "BTS 1", max(monotone_rtol, 1e-6))
    grid_primal = float(F[rows, k].sum())
    weak_ok = all(t[4] >= grid_primal - 1e-9 * max(1.0, abs(grid_primal)) for t in trace)

    # off-lattice refinement of (S1, S2) at the final multipliers
    s1, s2 = C1[rows, k].copy(), C2[rows, k].copy()
    Xc = X[rows, k].copy()
    val = F[rows, k].copy()
    lag = val - l1 * s1 - l2 * s2
    h1 = np.full(L, cap1 / (2.0 * grid.n_lin))
    h2 = np.full(L, cap2 / (2.0 * grid.n_lin))
    moves = ((1, 0), (-1, 0), (0, 1), (0, -1))
    for _ in range(grid.refine_rounds):
        for d1, d2 in moves:
            t1 = np.clip(s1 + d1 * h1, 0.0, b.P1)
            t2 = np.clip(s2 + d2 * h2, 0.0, b.P2)
            v, Xt = optimize_batch(g, alpha, t1, t2, mu, scfg, X0=Xc)
            lt = v - l1 * t1 - l2 * t2
            better = lt > lag + 1e-12
            s1, s2 = np.where(better, t1, s1), np.where(better, t2, s2)
            val, lag = np.where(better, v, val), np.where(better, lt, lag)
            Xc = np.where(better[:, None], Xt, Xc)
        h1, h2 = h1 / 2.0, h2 / 2.0
    dual_ref = float(lag.sum() + l1 * b.P1 + l2 * b.P2)

    # spend both budgets exactly, then re-optimize the beams
    s1 = s1 * (b.P1 / s1.sum()) if s1.sum() > 0 else np.full(L, b.P1 / L)
    s2 = s2 * (b.P2 / s2.sum()) if s2.sum() > 0 else np.full(L, b.P2 / L)
    vw, Xw = optimize_batch(g, alpha, s1, s2, mu, scfg, X0=Xc)
    vf, Xf = optimize_batch(g, alpha, s1, s2, mu, scfg)
    Xb = np.where((vw >= vf)[:, None], Xw, Xf)
    fixed_t = None if scfg.fixed_beta is None else _fixed_t(alpha, scfg.fixed_beta)
    beta, P = _decode(Xb, alpha, s1, s2, fixed_t)
    contrib = rate_terms(g, alpha, beta, P, mu)
    rate = float(contrib.sum())
    final_lag = rate - l1 * (s1.sum() - b.P1) - l2 * (s2.sum() - b.P2)
    dual_value = max(dual_ref, final_lag)
    return WidebandAllocation(
        P1=s1, P2=s2, schemes=["bf"] * L, rate=rate, lambdas=(l1, l2),
        dual_value=dual_value, duality_gap=dual_value - rate, contributions=contrib,
        beams=np.concatenate([beta, P], axis=1),
        info={"grid_primal": grid_primal, "grid_dual": min(t[4] for t in trace),
              "weak_duality_ok": weak_ok, "evaluations": len(trace), "trace": trace},
    )


def bf_sum_rate(ch: WidebandChannel, alloc: WidebandAllocation, mu) -> float:
    """Re-evaluate a beamformed allocation from its stored angles and stream powers."""
    beta = alloc.beams[:, :4]
    P = alloc.beams[:, 4:]
    return float(np.sum(rate_terms(ch.gains, ch.alphas, beta, P, mu)))


def equal_power_bf(ch: WidebandChannel, budgets, mu=1.0, cfg: BFSearchConfig | None = None):
    """Cooperative beamforming with ``Ptot_k / L`` on every subcarrier."""
    if ch.mode != "miso":
        raise ChannelError("equal_power_bf needs a MISO-mode channel")
    b = PowerBudget.from_seq(budgets)
    cfg = cfg or _bf_search_default()
    L = ch.L
    s1 = np.full(L, b.P1 / L)
    s2 = np.full(L, b.P2 / L)
    alpha = ch.alphas
    v, X = optimize_batch(ch.gains, alpha, s1, s2, mu, cfg)
    fixed_t = None if cfg.fixed_beta is None else _fixed_t(alpha, cfg.fixed_beta)
    beta, P = _decode(X, alpha, s1, s2, fixed_t)
    contrib = rate_terms(ch.gains, alpha, beta, P, mu)
    return WidebandAllocation(P1=s1, P2=s2, schemes=["bf"] * L, rate=float(contrib.sum()),
                              contributions=contrib, beams=np.concatenate([beta, P], axis=1))
