"""Comparison schemes for the cooperative optimizers.

* noncooperative power control: each BTS serves only its own mobile, powers
  chosen jointly (narrowband, or per subcarrier in the wideband case),
* equal-power cooperation across subcarriers,
* noncooperative beamforming: joint beams/powers per subcarrier or
  zero-forcing into the cross channel's null space with water-filling,
* an approximate coherent (phase-aligned) baseline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .beamforming import BFSearchConfig, HALF_PI, _iterate, rate_terms
from .channel import ChannelError, MisoChannel, NarrowbandGains, PowerBudget, WidebandChannel
from .narrowband import PowerAllocation, RatePair, RateTargetError
from .wideband import LN2, WidebandAllocation, dual_solve, fixed_allocation

COHERENT_LABEL = "approximate coherent baseline"


@dataclass
class NoncoopResult:
    value: float                 # weighted sum rate (sumrate) or R2 (frontier)
    rates: RatePair
    allocation: PowerAllocation


def _noncoop_rates(g, p1, p2):
    """Own-mobile-only rates for BTS powers ``p1`` (to mobile 1) and ``p2`` (to mobile 2)."""
    g11, g21, g12, g22 = (np.asarray(g)[..., i] for i in range(4))
    R1 = np.log2(1.0 + g11 * p1 / (1.0 + g12 * p2))
    R2 = np.log2(1.0 + g22 * p2 / (1.0 + g21 * p1))
    return R1, R2


def _grid_refine_2d(f, cap1, cap2, n_grid, rounds=30):
    """Batched 2-D grid search plus compass refinement; ``f(p1, p2)`` broadcasts.

    ``cap1``/``cap2`` have the batch shape ``(B,)``.  Returns ``(p1, p2, value)``.
    """
    u = np.linspace(0.0, 1.0, n_grid)
    P1 = cap1[:, None, None] * u[None, :, None]
    P2 = cap2[:, None, None] * u[None, None, :]
    V = f(P1, P2).reshape(cap1.size, -1)
    k = np.argmax(V, axis=1)
    i, j = np.unravel_index(k, (n_grid, n_grid))
    p1 = cap1 * u[i]
    p2 = cap2 * u[j]
    best = V[np.arange(cap1.size), k]
    h1 = cap1 / (n_grid - 1)
    h2 = cap2 / (n_grid - 1)
    for _ in range(rounds):
        moved = False
        for d1, d2 in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a = np.clip(p1 + d1 * h1, 0.0, cap1)
            b = np.clip(p2 + d2 * h2, 0.0, cap2)
            v = f(a, b)
            better = v > best
            p1, p2, best = np.where(better, a, p1), np.where(better, b, p2), np.where(better, v, best)
            moved = moved or bool(better.any())
        if not moved:
            h1, h2 = h1 / 2.0, h2 / 2.0
    return p1, p2, best


def noncoop_power_control(g, budget, mu_or_R1target, mode: str = "sumrate",
                          n_grid: int = 201) -> NoncoopResult:
    """Joint power control without message sharing on one channel.

    ``sumrate`` maximizes ``R1 + mu R2``; ``frontier`` maximizes ``R2``
    subject to ``R1 = target`` (BTS 1 power solved from the target for each
    BTS 2 power on a grid, then refined).
    """
    g = NarrowbandGains.from_seq(g)
    b = PowerBudget.from_seq(budget)
    ga = g.as_array()
    if mode == "sumrate":
        mu = float(mu_or_R1target)
        if mu < 0:
            raise ValueError("mu must be nonnegative")

        def f(p1, p2):
            R1, R2 = _noncoop_rates(ga, p1, p2)
            return R1 + mu * R2

        p1, p2, v = _grid_refine_2d(f, np.array([b.P1]), np.array([b.P2]), n_grid)
        p1, p2, v = float(p1[0]), float(p2[0]), float(v[0])
    elif mode == "frontier":
        target = float(mu_or_R1target)
        top = math.log2(1.0 + g.g11 * b.P1)
        if not (0.0 <= target <= top + 1e-12):
            raise RateTargetError(f"R1 target {target} outside [0, {top}]")
        t = math.expm1(target * LN2)

        def p1_for(p2):
            # smallest BTS 1 power meeting the target against interference p2
            if g.g11 == 0:
                return np.where(t == 0, 0.0, np.inf)
            return t * (1.0 + g.g12 * p2) / g.g11

        def r2(p2):
            p1 = p1_for(p2)
            _, R2 = _noncoop_rates(ga, np.minimum(p1, b.P1), p2)
            return np.where(p1 <= b.P1 * (1 + 1e-12), R2, -np.inf)

        x = np.linspace(0.0, b.P2, n_grid)
        v = r2(x)
        k = int(np.argmax(v))
        lo, hi = x[max(k - 1, 0)], x[min(k + 1, n_grid - 1)]
        for _ in range(80):                  # golden-section on the bracket
            m1 = hi - 0.618033988749895 * (hi - lo)
            m2 = lo + 0.618033988749895 * (hi - lo)
            if r2(m1) >= r2(m2):
                hi = m2
            else:
                lo = m1
        cands = [x[k], 0.5 * (lo + hi)]
        p2 = max(cands, key=lambda c: float(r2(c)))
        p1 = float(min(p1_for(p2), b.P1))
        p2 = float(p2)
        v = float(r2(p2))
    else:
        raise ValueError("mode must be 'sumrate' or 'frontier'")
    R1, R2 = _noncoop_rates(ga, p1, p2)
    return NoncoopResult(v, RatePair(float(R1), float(R2)), PowerAllocation(p1, 0.0, 0.0, p2))


def noncoop_power_control_wideband(ch: WidebandChannel, budgets, mu=1.0,
                                   allocation: str = "per-subcarrier", n_grid: int = 65):
    """Noncooperative joint power control over ``L`` subcarriers.

    ``per-subcarrier``: each subcarrier gets ``Ptot_k / L`` per BTS and the
    two BTSs optimize their powers jointly within that subcarrier.
    ``dual``: powers are also moved across subcarriers (Lagrangian dual
    restricted to the own-mobile scheme).
    """
    if ch.mode != "scalar":
        raise ChannelError("noncooperative power control needs a scalar-mode channel")
    b = PowerBudget.from_seq(budgets)
    if allocation == "dual":
        return dual_solve(ch, b, mu, schemes=("rnc",))
    if allocation != "per-subcarrier":
        raise ValueError("allocation must be 'per-subcarrier' or 'dual'")
    L = ch.L
    g = ch.gains

    def f(p1, p2):
        gg = g.reshape((L,) + (1,) * (np.ndim(p1) - 1) + (4,))
        R1, R2 = _noncoop_rates(gg, p1, p2)
        return R1 + mu * R2

    p1, p2, _ = _grid_refine_2d(f, np.full(L, b.P1 / L), np.full(L, b.P2 / L), n_grid)
    return fixed_allocation(ch, p1, p2, mu, schemes=("rnc",))


def equal_power_coop(ch: WidebandChannel, budgets, mu=1.0) -> WidebandAllocation:
    """``Ptot_k / L`` on every subcarrier, best cooperative scheme per subcarrier."""
    if ch.mode != "scalar":
        raise ChannelError("equal_power_coop needs a scalar-mode channel")
    b = PowerBudget.from_seq(budgets)
    return fixed_allocation(ch, b.P1 / ch.L, b.P2 / ch.L, mu)


# -- noncooperative beamforming ------------------------------------------------

def zf_rate_pair(ch: MisoChannel, budget) -> RatePair:
    """Each BTS zero-forces into the null space of its cross channel at full power."""
    b = PowerBudget.from_seq(budget)
    g = ch.gains
    s1 = math.sin(ch.alpha1) ** 2
    s2 = math.sin(ch.alpha2) ** 2
    return RatePair(math.log2(1.0 + g.g11 * s1 * b.P1), math.log2(1.0 + g.g22 * s2 * b.P2))


def _joint_objective(g, alpha, P1, P2, mu):
    """Own-mobile streams only; coordinates ``(p1, p2, t11, t22)`` in ``[0, 1]``."""
    def f(X):
        a1, a2 = alpha[..., 0], alpha[..., 1]
        b11 = a1 + X[..., 2] * (HALF_PI - a1)
        b22 = a2 + X[..., 3] * (HALF_PI - a2)
        zero = np.zeros_like(b11)
        beta = np.stack([b11, zero, zero, b22], axis=-1)
        P = np.stack([X[..., 0] * P1, zero, zero, X[..., 1] * P2], axis=-1)
        return rate_terms(g, alpha, beta, P, mu)
    return f


def noncoop_joint_bf(ch: MisoChannel, budget, mu=1.0, cfg: BFSearchConfig | None = None):
    """Joint beamforming and power control with each BTS serving its own mobile.

    Returns ``(weighted_rate, RatePair, (beta11, beta22, P11, P22))``.
    Runs from several power starts with zero-forcing beams and keeps the best.
    """
    cfg = cfg or BFSearchConfig()
    b = PowerBudget.from_seq(budget)
    g = ch.gains.as_array()
    alpha = np.array([ch.alpha1, ch.alpha2])
    starts = np.array([[1, 1, 1, 1], [1, 0, 0, 1], [0, 1, 1, 0], [1, 1, 0, 0],
                       [0.5, 0.5, 1, 1]], dtype=float)
    n = len(starts)
    gg = np.broadcast_to(g, (n, 4))
    aa = np.broadcast_to(alpha, (n, 2))

    def make_f(idx, extra):
        if extra:
            return _joint_objective(gg[idx, None, :], aa[idx, None, :], b.P1, b.P2, mu)
        return _joint_objective(gg[idx], aa[idx], b.P1, b.P2, mu)

    X, cur = _iterate(make_f, starts.copy(), cfg, range(4))
    k = int(np.argmax(cur))
    x = X[k]
    b11 = alpha[0] + x[2] * (HALF_PI - alpha[0])
    b22 = alpha[1] + x[3] * (HALF_PI - alpha[1])
    R1, R2 = rate_terms(g, alpha, np.array([b11, 0.0, 0.0, b22]),
                        np.array([x[0] * b.P1, 0.0, 0.0, x[1] * b.P2]))
    return float(cur[k]), RatePair(float(R1), float(R2)), (b11, b22, x[0] * b.P1, x[1] * b.P2)


def noncoop_joint_bf_frontier(ch: MisoChannel, budget, mu_list, cfg=None):
    return [(float(m),) + noncoop_joint_bf(ch, budget, m, cfg)[1:2] for m in mu_list]


def waterfill(gains, budget, weights=None):
    """``max sum w log2(1 + a p)`` s.t. ``sum p = budget``; returns ``(p, lam)``.

    ``lam`` is the multiplier in bits per unit power.
    """
    a = np.asarray(gains, dtype=float).ravel()
    w = np.ones_like(a) if weights is None else np.broadcast_to(np.asarray(weights, float), a.shape)
    if budget <= 0 or not np.any((a > 0) & (w > 0)):
        return np.zeros_like(a), math.inf

    def power(nu):
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where((a > 0) & (w > 0), w / nu - 1.0 / np.where(a > 0, a, 1.0), 0.0)
        return np.maximum(p, 0.0)

    lo, hi = 0.0, float(np.max(w * a))
    while power(hi).sum() > budget:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if power(mid).sum() > budget:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    p = power(hi)
    # spend the last sliver on the active set exactly
    on = p > 0
    if on.any():
        p[on] += (budget - p.sum()) * w[on] / w[on].sum()
    return p, hi / LN2


def noncoop_nullspace_bf(ch, budgets, mu=1.0, mode: str = "wideband", cfg=None):
    """Noncooperative beamforming baseline.

    ``joint`` (narrowband ``MisoChannel``): own-mobile beams and powers
    optimized jointly for ``R1 + mu R2``.  ``wideband``: every BTS
    zero-forces into its cross channel (effective gain ``g_kk sin^2 alpha_k``)
    and water-fills its budget over the subcarriers.
    """
    if mode == "joint":
        if not isinstance(ch, MisoChannel):
            raise ChannelError("joint mode takes a narrowband MisoChannel")
        return noncoop_joint_bf(ch, budgets, mu, cfg)
    if mode != "wideband":
        raise ValueError("mode must be 'joint' or 'wideband'")
    if not isinstance(ch, WidebandChannel) or ch.mode != "miso":
        raise ChannelError("wideband mode takes a MISO WidebandChannel")
    b = PowerBudget.from_seq(budgets)
    alpha = ch.alphas
    a1 = ch.gains[:, 0] * np.sin(alpha[:, 0]) ** 2
    a2 = ch.gains[:, 3] * np.sin(alpha[:, 1]) ** 2
    p1, lam1 = waterfill(a1, b.P1)
    p2, lam2 = waterfill(a2, b.P2, mu)
    contrib = np.log2(1.0 + a1 * p1) + mu * np.log2(1.0 + a2 * p2)
    L = ch.L
    zero = np.zeros(L)
    half = np.full(L, HALF_PI)
    beams = np.stack([half, zero, zero, half, p1, zero, zero, p2], axis=1)
    return WidebandAllocation(P1=p1, P2=p2, schemes=["zf-noncoop"] * L, rate=float(contrib.sum()),
                              lambdas=(lam1, lam2), contributions=contrib, beams=beams)


# -- coherent baseline --------------------------------------------------------------

@dataclass
class CoherentResult:
    rate: float
    label: str = COHERENT_LABEL
    stream_gains: np.ndarray | None = None
    powers: np.ndarray | None = None
    single_user: np.ndarray | None = None
    info: dict = field(default_factory=dict)


def _stacked_channels(ch: WidebandChannel):
    """Per-subcarrier ``(2, n)`` matrices whose row ``j`` is mobile ``j``'s joint channel."""
    if ch.mode == "miso":
        v = ch.vectors                                   # (L, 4, Nt): h11, h21, h12, h22
        row1 = np.concatenate([v[:, 0], v[:, 2]], axis=1)
        row2 = np.concatenate([v[:, 1], v[:, 3]], axis=1)
    else:
        a = ch.amplitudes
        if a is None:
            a = np.sqrt(ch.gains).astype(complex)
        row1 = np.stack([a[:, 0], a[:, 2]], axis=1)
        row2 = np.stack([a[:, 1], a[:, 3]], axis=1)
    # conjugate so that received signal is H @ x
    return np.conj(np.stack([row1, row2], axis=1))


def _stream_value(gains, w, nu):
    """Per-row Lagrangian ``sum w ln(1 + a p) - nu p`` at the water-filling powers."""
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(gains > 0, np.maximum(w / nu - 1.0 / np.where(gains > 0, gains, 1.0), 0.0), 0.0)
    return np.sum(w * np.log1p(gains * p) - nu * p, axis=-1), p.sum(axis=-1)


def _coherent_options(H, cond_limit):
    """Stream gains ``(L, 3, 2)`` for zero-forcing, MRT to mobile 1, MRT to mobile 2."""
    L = H.shape[0]
    G = H @ np.conj(np.swapaxes(H, 1, 2))                # (L, 2, 2) Gram
    norms = np.real(np.stack([G[:, 0, 0], G[:, 1, 1]], axis=1))
    det = np.real(G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] * G[:, 1, 0])
    ok = det > np.maximum(norms[:, 0] * norms[:, 1], 1e-300) / cond_limit
    with np.errstate(divide="ignore", invalid="ignore"):
        zf = np.stack([det / norms[:, 1], det / norms[:, 0]], axis=1)
    zf = np.where(ok[:, None], np.maximum(zf, 0.0), 0.0)
    opts = np.zeros((L, 3, 2))
    opts[:, 0] = zf
    opts[:, 1, 0] = norms[:, 0]
    opts[:, 2, 1] = norms[:, 1]
    return opts


COHERENT_OPTIONS = ("zf", "mrt->1", "mrt->2")


def coherent_upper_baseline(ch: WidebandChannel, budgets, mu=1.0, noncoherent="auto",
                            cond_limit=1e8) -> CoherentResult:
    """Two BTSs acting as one phase-aligned transmitter under a sum-power budget.

    Each subcarrier uses either zero-forcing across the stacked antennas
    (stream gains ``1 / [(H H^H)^-1]_jj``) or maximum-ratio transmission to a
    single mobile, picked by a common power price; power is then
    water-filled over the chosen streams.  A phase-aligned system can also
    run any noncoherent scheme, so the result is the larger of this value
    and the noncoherent optimum: ``noncoherent`` is a rate, an allocation,
    ``None`` (skip) or ``"auto"`` (solve it here).  Approximate by design.
    """
    b = PowerBudget.from_seq(budgets)
    total = b.P1 + b.P2
    H = _stacked_channels(ch)
    L = H.shape[0]
    opts = _coherent_options(H, cond_limit)
    w = np.array([1.0, mu])

    def choose(nu):
        v, p = _stream_value(opts, w, nu)
        k = np.argmax(v, axis=1)
        return k, p[np.arange(L), k].sum()

    lo, hi = 0.0, float(np.max(opts * w))
    if total <= 0 or hi <= 0:
        k = np.zeros(L, dtype=int)
        hi = math.inf
    else:
        while choose(hi)[1] > total:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if choose(mid)[1] > total:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-14 * hi:
                break
        k = choose(hi)[0]
    gains = opts[np.arange(L), k]
    p, lam = waterfill(gains.ravel(), total, np.tile(w, L))
    p = p.reshape(L, 2)
    aligned = float(np.sum(w * np.log2(1.0 + gains * p)))
    if isinstance(noncoherent, str):
        if noncoherent != "auto":
            raise ValueError("noncoherent must be 'auto', None, a rate or an allocation")
        if ch.mode == "miso":
            from .beamforming import wideband_bf_dual_solve
            noncoherent = wideband_bf_dual_solve(ch, b, mu)
        else:
            noncoherent = dual_solve(ch, b, mu)
    nc = None if noncoherent is None else float(getattr(noncoherent, "rate", noncoherent))
    rate = aligned if nc is None else max(aligned, nc)
    return CoherentResult(rate=rate, stream_gains=gains, powers=p,
                          single_user=k > 0,
                          info={"lambda": lam, "aligned_rate": aligned, "noncoherent_rate": nc,
                                "options": [COHERENT_OPTIONS[i] for i in k],
                                "source": "aligned" if nc is None or aligned >= nc else "noncoherent"})
