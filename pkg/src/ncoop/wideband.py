"""Power allocation across ``L`` subcarriers.

Every subcarrier picks the best of four transmission schemes for its pair of
per-BTS powers ``(P1(l), P2(l))``:

* ``r1c``  both BTSs send to mobile 1,
* ``r2c``  both BTSs send to mobile 2,
* ``r3c``  BTS 2 serves mobile 1 while BTS 1 serves mobile 2,
* ``rnc``  each BTS serves its own mobile.

The exact problem is handled through its Lagrangian dual.  For fixed
multipliers the dual function splits into per-subcarrier searches, and
``(lambda1, lambda2)`` is found by nested bisection.  The high-SNR variant
keeps only ``r1c``/``r2c`` and reduces to a two-level water-filling.

Each per-subcarrier search runs over a candidate set that does not depend on
the multipliers: closed-form optima of the single-active cases plus a fixed
grid of both-active points.  Maximizing ``f - lambda . P`` over a fixed set
makes the allocated power non-increasing in its own multiplier, and the dual
value an exact upper bound on every allocation drawn from that set.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelError, NarrowbandGains, PowerBudget, WidebandChannel

LN2 = math.log(2.0)
SCHEMES = ("r1c", "r2c", "r3c", "rnc")
SCHEME_LABELS = {
    "r1c": "coop->1",
    "r2c": "coop->2",
    "r3c": "coop-swap",
    "rnc": "noncoop",
}


class DualSearchError(RuntimeError):
    """The bisection saw allocated power increase with its own multiplier."""


@dataclass(frozen=True)
class SubcarrierRateOptions:
    """Weighted rates of the four schemes on one subcarrier."""

    r1c: float
    r2c: float
    r3c: float
    rnc: float

    def as_array(self) -> np.ndarray:
        return np.array([self.r1c, self.r2c, self.r3c, self.rnc])

    def best(self, schemes=SCHEMES) -> tuple[float, str]:
        vals = [(getattr(self, s), s) for s in SCHEMES if s in schemes]
        top = max(v for v, _ in vals)
        return top, next(s for v, s in vals if v == top)


def scheme_rates(gains, P1, P2, mu):
    """Vectorized ``(r1c, r2c, r3c, rnc)`` stacked on a new last axis.

    ``gains`` has trailing dimension 4 and broadcasts against ``P1``/``P2``.
    """
    g = np.asarray(gains, dtype=float)
    g11, g21, g12, g22 = (g[..., i] for i in range(4))
    P1 = np.asarray(P1, dtype=float)
    P2 = np.asarray(P2, dtype=float)
    a1 = g11 * P1
    a2 = g21 * P1
    b1 = g12 * P2
    b2 = g22 * P2
    r1c = np.log2(1.0 + a1 + b1)
    r2c = mu * np.log2(1.0 + a2 + b2)
    r3c = np.log2(1.0 + b1 / (1.0 + a1)) + mu * np.log2(1.0 + a2 / (1.0 + b2))
    rnc = np.log2(1.0 + a1 / (1.0 + b1)) + mu * np.log2(1.0 + b2 / (1.0 + a2))
    return np.stack(np.broadcast_arrays(r1c, r2c, r3c, rnc), axis=-1)


def _scheme_mask(schemes):
    bad = [s for s in schemes if s not in SCHEMES]
    if bad or not schemes:
        raise ValueError(f"schemes must be a nonempty subset of {SCHEMES}, got {schemes!r}")
    return np.array([s in schemes for s in SCHEMES])


def best_rates(gains, P1, P2, mu, schemes=SCHEMES):
    """Vectorized best weighted rate and scheme index (first index wins ties)."""
    R = scheme_rates(gains, P1, P2, mu)
    mask = _scheme_mask(schemes)
    R = np.where(mask, R, -np.inf)
    idx = np.argmax(R, axis=-1)
    return np.take_along_axis(R, idx[..., None], axis=-1)[..., 0], idx


def subcarrier_best_rate(g_l, P1l, P2l, mu, schemes=SCHEMES) -> dict:
    """Best of the four weighted scheme rates on one subcarrier.

    Ties go to the earlier scheme in ``(r1c, r2c, r3c, rnc)``.
    """
    if P1l < 0 or P2l < 0:
        raise ValueError("powers must be nonnegative")
    g = NarrowbandGains.from_seq(g_l).as_array()
    opts = SubcarrierRateOptions(*scheme_rates(g, P1l, P2l, mu).tolist())
    value, scheme = opts.best(schemes)
    return {"value": float(value), "scheme": scheme, "options": opts}


# -- per-subcarrier candidate sets ---------------------------------------

@dataclass
class SearchConfig:
    """Resolution of the per-subcarrier Lagrangian search.

    The both-active grid has ``n_log`` geometric plus ``n_lin`` uniform
    points per axis on ``(0, cap]``; the geometric part starts at
    ``cap * log_floor``.  Refinement (only at the final multipliers) is a
    pattern search with ``refine_rounds`` step halvings starting from
    ``refine_step`` times the local grid spacing.
    """

    n_log: int = 12
    n_lin: int = 12
    log_floor: float = 1e-3
    cap_factor: float = 4.0
    refine_rounds: int = 3
    refine_iters: int = 8
    cap: tuple | None = None

    def axis(self, cap):
        cap = np.asarray(cap, dtype=float)[..., None]
        u = np.geomspace(self.log_floor, 1.0, self.n_log)
        v = np.linspace(0.0, 1.0, self.n_lin + 1)[1:]
        base = np.unique(np.concatenate([u, v]))
        return cap * base


def effective_L(gains) -> int:
    """Subcarriers whose strongest link beats the median strongest link."""
    best = np.max(np.asarray(gains, dtype=float), axis=-1)
    return max(1, int(np.sum(best > np.median(best))))


class _CandidateSet:
    """Fixed both-active grid and its rates for every subcarrier."""

    def __init__(self, gains, caps1, caps2, mu, schemes, cfg: SearchConfig):
        self.gains = gains
        self.mu = mu
        self.schemes = schemes
        x = cfg.axis(caps1)                                 # (L, n)
        y = cfg.axis(caps2)
        L, n = x.shape
        self.P1 = np.broadcast_to(x[:, :, None], (L, n, n)).reshape(L, -1)
        self.P2 = np.broadcast_to(y[:, None, :], (L, n, n)).reshape(L, -1)
        both = [s for s in ("r3c", "rnc") if s in schemes]
        if both:
            self.F, self.S = best_rates(gains[:, None, :], self.P1, self.P2, mu, schemes)
        else:
            self.F = np.full(self.P1.shape, -np.inf)
            self.S = np.zeros(self.P1.shape, dtype=int)


def _single_active(gains, lam1, lam2, mu, cap1, cap2):
    """Closed-form optima of ``w log2(1 + g P) - lam P`` for each (mobile, BTS) link.

    Returns ``P1``/``P2`` candidate arrays of shape ``(L, 4)`` (one column per
    link in ``(11, 21, 12, 22)`` order).
    """
    g = np.asarray(gains, dtype=float)
    w = np.array([1.0, mu, 1.0, mu])
    lam = np.array([lam1, lam1, lam2, lam2], dtype=float)
    cap = np.stack([cap1, cap1, cap2, cap2], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        level = np.where(lam > 0, w / (np.where(lam > 0, lam, 1.0) * LN2), np.inf)
        P = np.where(g > 0, level - 1.0 / np.where(g > 0, g, 1.0), 0.0)
    P = np.clip(np.nan_to_num(P, nan=0.0, posinf=np.inf), 0.0, None)
    P = np.minimum(P, cap)
    on_bts1 = np.array([True, True, False, False])
    P1 = np.where(on_bts1, P, 0.0)
    P2 = np.where(on_bts1, 0.0, P)
    return P1, P2


def _lagrangian_argmax(cs: _CandidateSet, lam1, lam2, cap1, cap2):
    """Best candidate per subcarrier; returns ``(P1, P2, f, scheme_idx, value)``."""
    s1, s2 = _single_active(cs.gains, lam1, lam2, cs.mu, cap1, cap2)
    fs, ss = best_rates(cs.gains[:, None, :], s1, s2, cs.mu, cs.schemes)
    zero = np.zeros((cs.gains.shape[0], 1))
    f0, s0 = best_rates(cs.gains[:, None, :], zero, zero, cs.mu, cs.schemes)
    P1 = np.concatenate([zero, s1, cs.P1], axis=1)
    P2 = np.concatenate([zero, s2, cs.P2], axis=1)
    F = np.concatenate([f0, fs, cs.F], axis=1)
    S = np.concatenate([s0, ss, cs.S], axis=1)
    V = F - lam1 * P1 - lam2 * P2
    k = np.argmax(V, axis=1)
    pick = lambda A: np.take_along_axis(A, k[:, None], axis=1)[:, 0]
    return pick(P1), pick(P2), pick(F), pick(S), pick(V)


def _refine(gains, P1, P2, lam1, lam2, mu, schemes, cap1, cap2, cfg: SearchConfig):
    """Vectorized pattern search on ``f - lam . P`` around each subcarrier's point."""
    def value(a, b):
        f, _ = best_rates(gains, a, b, mu, schemes)
        return f - lam1 * a - lam2 * b

    P1 = P1.copy()
    P2 = P2.copy()
    cur = value(P1, P2)
    h1 = np.maximum(0.05 * np.maximum(P1, cap1 / cfg.n_lin), 1e-9)
    h2 = np.maximum(0.05 * np.maximum(P2, cap2 / cfg.n_lin), 1e-9)
    moves = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)]
    for _ in range(cfg.refine_rounds):
        for _ in range(cfg.refine_iters):
            improved = np.zeros(P1.shape, dtype=bool)
            for d1, d2 in moves:
                a = np.clip(P1 + d1 * h1, 0.0, cap1)
                b = np.clip(P2 + d2 * h2, 0.0, cap2)
                v = value(a, b)
                better = v > cur + 1e-15
                P1 = np.where(better, a, P1)
                P2 = np.where(better, b, P2)
                cur = np.where(better, v, cur)
                improved |= better
            if not improved.any():
                break
        h1 = h1 / 4.0
        h2 = h2 / 4.0
    return P1, P2


def _lagrangian_bound(mu, lam1, lam2, gmax):
    """Power beyond which ``(1 + mu) log2(1 + gmax S) - min(lam) S`` is negative."""
    lam = min(lam1, lam2)
    if lam <= 0:
        return math.inf
    w = 1.0 + mu
    S = w / (lam * LN2)
    while w * math.log2(1.0 + gmax * S) >= lam * S:
        S *= 2.0
    return S


def inner_maximize(g_l, lambda1, lambda2, mu, search_cfg: SearchConfig | None = None,
                   schemes=SCHEMES) -> dict:
    """Maximize ``best_rate(P1, P2) - lambda1 P1 - lambda2 P2`` over ``P1, P2 >= 0``.

    The search box defaults to the power at which the rate can no longer
    pay for itself.  When a multiplier is zero and the search is unbounded
    the result carries ``unbounded=True``.
    """
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("multipliers must be nonnegative")
    cfg = search_cfg or SearchConfig()
    g = NarrowbandGains.from_seq(g_l).as_array()[None, :]
    if cfg.cap is not None:
        cap1, cap2 = (float(c) for c in cfg.cap)
        unbounded = False
    else:
        bound = _lagrangian_bound(mu, lambda1, lambda2, float(g.max()))
        unbounded = not math.isfinite(bound)
        if unbounded:
            return {"P1l": math.inf, "P2l": math.inf, "lagrangian_value": math.inf,
                    "unbounded": True}
        cap1 = cap2 = bound
    c1 = np.array([cap1])
    c2 = np.array([cap2])
    cs = _CandidateSet(g, c1, c2, mu, schemes, cfg)
    P1, P2, _, _, _ = _lagrangian_argmax(cs, lambda1, lambda2, c1, c2)
    P1, P2 = _refine(g, P1, P2, lambda1, lambda2, mu, schemes, c1, c2, cfg)
    f, s = best_rates(g, P1, P2, mu, schemes)
    return {
        "P1l": float(P1[0]),
        "P2l": float(P2[0]),
        "rate": float(f[0]),
        "scheme": SCHEMES[int(s[0])],
        "lagrangian_value": float(f[0] - lambda1 * P1[0] - lambda2 * P2[0]),
        "unbounded": unbounded,
    }


# -- allocations -----------------------------------------------------------

@dataclass
class WidebandAllocation:
    """Per-subcarrier powers, scheme tags and dual diagnostics.

    ``beams`` holds per-subcarrier beamforming configurations in MISO mode
    (rows ``beta11, beta21, beta12, beta22, P11, P21, P12, P22``).
    """

    P1: np.ndarray
    P2: np.ndarray
    schemes: list
    rate: float
    lambdas: tuple = (math.nan, math.nan)
    dual_value: float = math.nan
    duality_gap: float = math.nan
    contributions: np.ndarray | None = None
    beams: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def relative_gap(self) -> float:
        return self.duality_gap / self.rate if self.rate > 0 else math.nan

    def totals(self) -> tuple[float, float]:
        return float(np.sum(self.P1)), float(np.sum(self.P2))

    def feasible(self, budgets, rtol=1e-3) -> bool:
        b = PowerBudget.from_seq(budgets)
        t1, t2 = self.totals()
        ok = np.all(self.P1 >= 0) and np.all(self.P2 >= 0)
        return bool(ok and t1 <= b.P1 * (1 + rtol) + 1e-12 and t2 <= b.P2 * (1 + rtol) + 1e-12)

    def rows(self, ch: WidebandChannel):
        contrib = self.contributions if self.contributions is not None else np.full(ch.L, np.nan)
        for l in range(ch.L):
            row = {"l": l}
            row.update({f"g{k}": float(ch.gains[l, i]) for i, k in enumerate(("11", "21", "12", "22"))})
            row.update(P1=float(self.P1[l]), P2=float(self.P2[l]), scheme=self.schemes[l],
                       rate_contribution=float(contrib[l]))
            if self.beams is not None:
                for name, v in zip(BEAM_COLUMNS, self.beams[l]):
                    row[name] = float(v)
            yield row

    def to_csv(self, ch: WidebandChannel, fh=None):
        cols = list(ALLOC_COLUMNS) + (list(BEAM_COLUMNS) if self.beams is not None else [])
        buf = fh if fh is not None else io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\r\n")
        w.writeheader()
        for row in self.rows(ch):
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return None if fh is not None else buf.getvalue()

    def to_dict(self) -> dict:
        doc = {
            "rate": self.rate,
            "lambdas": list(self.lambdas),
            "dual_value": self.dual_value,
            "duality_gap": self.duality_gap,
            "relative_gap": self.relative_gap,
            "P1": self.P1.tolist(),
            "P2": self.P2.tolist(),
            "schemes": list(self.schemes),
        }
        if self.beams is not None:
            doc["beams"] = self.beams.tolist()
        doc.update({k: v for k, v in self.info.items() if k != "trace"})
        return doc

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


ALLOC_COLUMNS = ("l", "g11", "g21", "g12", "g22", "P1", "P2", "scheme", "rate_contribution")
BEAM_COLUMNS = ("beta11", "beta21", "beta12", "beta22", "P11", "P21", "P12", "P22")


def sum_rate(ch: WidebandChannel, alloc: WidebandAllocation, mu) -> float:
    """``sum_l [R1(l) + mu R2(l)]`` using each subcarrier's own scheme tag."""
    R = scheme_rates(ch.gains, alloc.P1, alloc.P2, mu)
    idx = np.array([SCHEMES.index(s) for s in alloc.schemes])
    return float(np.sum(R[np.arange(ch.L), idx]))


def _finish(ch, P1, P2, mu, schemes, **kw):
    f, s = best_rates(ch.gains, P1, P2, mu, schemes)
    return WidebandAllocation(
        P1=P1, P2=P2, schemes=[SCHEMES[i] for i in s], rate=float(np.sum(f)),
        contributions=f, **kw)


def fixed_allocation(ch: WidebandChannel, P1, P2, mu, schemes=SCHEMES) -> WidebandAllocation:
    """Allocation with given per-subcarrier powers and best scheme per subcarrier."""
    P1 = np.broadcast_to(np.asarray(P1, dtype=float), (ch.L,)).copy()
    P2 = np.broadcast_to(np.asarray(P2, dtype=float), (ch.L,)).copy()
    return _finish(ch, P1, P2, mu, schemes)


# -- nested bisection --------------------------------------------------------

def _bisect(total, budget, lam_max, eps):
    """Smallest multiplier (to relative accuracy ``eps``) with ``total(lam) <= budget``.

    ``total`` returns ``(power, payload)``.  Returns ``(lam, payload, trace,
    over)`` where the payload belongs to the feasible end of the bracket and
    ``over`` is ``(power, payload)`` at the infeasible end (``None`` when
    ``lam = 0`` is feasible).
    """
    trace = []
    p0, pay0 = total(0.0)
    trace.append((0.0, p0))
    if p0 <= budget:
        return 0.0, pay0, trace, None
    lo, hi = 0.0, lam_max
    over = (p0, pay0)
    p_hi, pay_hi = total(hi)
    trace.append((hi, p_hi))
    if p_hi > budget:
        raise DualSearchError("upper multiplier bracket still over budget")
    while hi - lo > eps * hi:
        mid = math.sqrt(lo * hi) if lo > 0 else 0.5 * hi
        p, pay = total(mid)
        trace.append((mid, p))
        if p <= budget:
            hi, p_hi, pay_hi = mid, p, pay
        else:
            lo, over = mid, (p, pay)
        if lo == 0.0 and hi < 1e-300:
            break
    return hi, pay_hi, trace, over


def _mix_weight(p_under, p_over, budget):
    """Weight on the feasible end that time-shares the two bracket ends onto ``budget``."""
    if p_over is None or p_over <= p_under:
        return 1.0
    return min(1.0, max(0.0, (p_over - budget) / (p_over - p_under)))


def _check_monotone(trace, budget, what, rtol):
    lam = np.array([t[0] for t in trace])
    P = np.array([t[1] for t in trace])
    order = np.argsort(lam, kind="stable")
    P = P[order]
    rise = np.max(np.diff(P)) if P.size > 1 else 0.0
    if rise > rtol * max(budget, 1.0):
        raise DualSearchError(
            f"total power of {what} rose by {rise:.3g} as its multiplier grew; "
            "the per-subcarrier search is too coarse, refine search_cfg")


def _fill_residual(gains, P1, P2, budgets, mu, schemes, caps, n_chunks=32):
    """Greedy: hand leftover power in chunks to the subcarrier with the best gain."""
    P = [P1.copy(), P2.copy()]
    for k in (0, 1):
        left = budgets[k] - P[k].sum()
        if left <= 0:
            continue
        chunk = left / n_chunks
        for _ in range(n_chunks):
            base, _ = best_rates(gains, P[0], P[1], mu, schemes)
            trial = [P[0].copy(), P[1].copy()]
            trial[k] = np.minimum(trial[k] + chunk, caps[k])
            up, _ = best_rates(gains, trial[0], trial[1], mu, schemes)
            gain = np.where(trial[k] > P[k], up - base, -np.inf)
            l = int(np.argmax(gain))
            if not np.isfinite(gain[l]):
                break
            P[k][l] = trial[k][l]
        # remainder left by capping goes to subcarriers with room, evenly
        left = budgets[k] - P[k].sum()
        if left > 1e-12:
            room = caps[k] - P[k]
            if room.sum() > 0:
                P[k] = P[k] + room * min(1.0, left / room.sum())
    return P[0], P[1]


def dual_solve(ch: WidebandChannel, budgets, mu=1.0, eps_lambda=1e-6,
               search_cfg: SearchConfig | None = None, schemes=SCHEMES,
               monotone_rtol=1e-6) -> WidebandAllocation:
    """Maximize ``sum_l max{r1c, r2c, r3c, rnc}`` under per-BTS total power budgets.

    Outer bisection on ``lambda1``, inner on ``lambda2``; ``eps_lambda`` is the
    relative bracket width at termination.  ``schemes`` restricts the
    per-subcarrier options (``("rnc",)`` gives noncooperative joint power
    control).  The returned allocation spends both budgets, carries the
    dual bound and the duality gap, and ``info["trace"]`` lists every
    evaluated ``(lambda1, lambda2, P1_total, P2_total, dual_value)``.
    """
    if ch.mode != "scalar":
        raise ChannelError("dual_solve needs a scalar-mode channel")
    b = PowerBudget.from_seq(budgets)
    if b.P1 <= 0 or b.P2 <= 0:
        raise ValueError("budgets must be positive")
    cfg = search_cfg or SearchConfig()
    g = ch.gains
    L = ch.L
    Leff = effective_L(g)
    cap1 = np.full(L, min(b.P1, cfg.cap_factor * b.P1 / Leff))
    cap2 = np.full(L, min(b.P2, cfg.cap_factor * b.P2 / Leff))
    full1 = np.full(L, b.P1)
    full2 = np.full(L, b.P2)
    cs = _CandidateSet(g, cap1, cap2, mu, schemes, cfg)
    lam_max = (1.0 + mu) * float(np.max(g)) / LN2 + 1e-12
    trace = []

    def evaluate(l1, l2):
        P1, P2, F, S, V = _lagrangian_argmax(cs, l1, l2, full1, full2)
        dual = float(V.sum() + l1 * b.P1 + l2 * b.P2)
        trace.append((l1, l2, float(P1.sum()), float(P2.sum()), dual))
        return P1, P2, F, S, dual

    mixed = []

    def inner(l1):
        def total2(l2):
            out = evaluate(l1, l2)
            return float(out[1].sum()), out
        l2, out, tr, over = _bisect(total2, b.P2, lam_max, eps_lambda)
        _check_monotone(tr, b.P2, "BTS 2", monotone_rtol)
        # BTS 1 power at the inner optimum: the two bracket ends time-shared
        # so that BTS 2 meets its budget
        t = _mix_weight(float(out[1].sum()), None if over is None else over[0], b.P2)
        p1 = float(out[0].sum())
        mixed.append((l1, t * p1 + (1.0 - t) * (float(over[1][0].sum()) if over else p1)))
        return l2, out

    def total1(l1):
        l2, out = inner(l1)
        return float(out[0].sum()), (l2, out)

    l1, (l2, out), _, _ = _bisect(total1, b.P1, lam_max, eps_lambda)
    _check_monotone(mixed, b.P1, "BTS 1", max(monotone_rtol, 1e-6))
    P1, P2, F, _, _ = out
    grid_primal = float(F.sum())
    dual_grid = min(t[4] for t in trace)
    weak_ok = all(t[4] >= grid_primal - 1e-9 * max(1.0, abs(grid_primal)) for t in trace)

    # dual bound at the final multipliers with off-grid refinement
    R1, R2 = _refine(g, P1, P2, l1, l2, mu, schemes, full1, full2, cfg)
    fr, _ = best_rates(g, R1, R2, mu, schemes)
    dual_ref = float(np.sum(np.maximum(fr - l1 * R1 - l2 * R2, F - l1 * P1 - l2 * P2))
                     + l1 * b.P1 + l2 * b.P2)

    P1f, P2f = _fill_residual(g, P1, P2, (b.P1, b.P2), mu, schemes, (full1, full2))
    alloc = _finish(ch, P1f, P2f, mu, schemes)
    final_lag = alloc.rate - l1 * (P1f.sum() - b.P1) - l2 * (P2f.sum() - b.P2)
    dual_value = max(dual_ref, final_lag)
    alloc.lambdas = (l1, l2)
    alloc.dual_value = dual_value
    alloc.duality_gap = dual_value - alloc.rate
    alloc.info = {
        "grid_primal": grid_primal,
        "grid_dual": dual_grid,
        "weak_duality_ok": weak_ok,
        "evaluations": len(trace),
        "trace": trace,
        "schemes_allowed": list(schemes),
    }
    return alloc


# -- high-SNR water-filling -----------------------------------------------------

def two_level_waterfill(G1, G2, budgets, tol=1e-13):
    """Maximize ``sum_n log2(1 + G1[n] P1[n] + G2[n] P2[n])`` under two power totals.

    At the optimum each channel is served by the BTS with the smaller
    ``lambda_k / G_k`` (ties to BTS 1) with ``P_k = (1/nu_k - 1/G_k)^+``,
    ``nu_k = lambda_k ln 2``.  A single channel is shared by both BTSs.
    Returns ``(P1, P2, lam1, lam2)`` with the multipliers in bits per unit
    power.
    """
    G1 = np.asarray(G1, dtype=float)
    G2 = np.asarray(G2, dtype=float)
    b = PowerBudget.from_seq(budgets)
    with np.errstate(divide="ignore"):
        y1 = np.where(G1 > 0, 1.0 / np.where(G1 > 0, G1, 1.0), np.inf)
        y2 = np.where(G2 > 0, 1.0 / np.where(G2 > 0, G2, 1.0), np.inf)

    def split(n1, n2):
        # nu in nats; nu_k = inf disables BTS k
        a = n1 * y1 <= n2 * y2
        with np.errstate(invalid="ignore", divide="ignore"):
            P1 = np.where(a, np.maximum(1.0 / n1 - y1, 0.0), 0.0)
            P2 = np.where(~a, np.maximum(1.0 / n2 - y2, 0.0), 0.0)
        return np.nan_to_num(P1), np.nan_to_num(P2), a

    def solve_level(budget, y):
        # exact water level over channels with finite y
        ys = np.sort(y[np.isfinite(y)])
        if budget <= 0 or ys.size == 0:
            return math.inf
        csum = np.cumsum(ys)
        for m in range(ys.size, 0, -1):
            w = (budget + csum[m - 1]) / m
            if w > ys[m - 1]:
                return 1.0 / w
        return 1.0 / (budget + ys[0])

    inf = math.inf
    if b.P2 <= 0:
        n1 = solve_level(b.P1, y1)
        P1, P2, _ = split(n1, inf)
        return P1, P2, n1 / LN2, inf
    if b.P1 <= 0:
        n2 = solve_level(b.P2, y2)
        P1, P2, a = split(inf, n2)
        return P1, P2, inf, n2 / LN2

    hi = 1.0 / np.min(np.concatenate([y1, y2]))

    def inner(n1):
        # BTS 2 level for given BTS 1 level
        lo2, hi2 = 0.0, hi
        for _ in range(200):
            mid = 0.5 * (lo2 + hi2)
            if mid == 0.0:
                break
            _, P2, _ = split(n1, mid)
            if P2.sum() > b.P2:
                lo2 = mid
            else:
                hi2 = mid
            if hi2 - lo2 <= tol * hi2:
                break
        return hi2

    lo1, hi1 = 0.0, hi
    for _ in range(200):
        mid = 0.5 * (lo1 + hi1)
        n2 = inner(mid)
        P1, _, _ = split(mid, n2)
        if P1.sum() > b.P1:
            lo1 = mid
        else:
            hi1 = mid
        if hi1 - lo1 <= tol * hi1:
            break
    if G1.size == 1:
        # a lone channel is shared: both budgets go to it
        s = 1.0 + G1[0] * b.P1 + G2[0] * b.P2
        return (np.array([b.P1]), np.array([b.P2]),
                float(G1[0] / (s * LN2)), float(G2[0] / (s * LN2)))
    n1 = hi1
    n2 = inner(n1)
    _, _, a = split(n1, n2)
    # a BTS left without channels takes the one where it is relatively strongest
    if a.all():
        a[int(np.argmin(y2 / y1))] = False
    elif not a.any():
        a[int(np.argmin(y1 / y2))] = True
    # exact levels on the final assignment
    n1 = solve_level(b.P1, np.where(a, y1, np.inf))
    n2 = solve_level(b.P2, np.where(~a, y2, np.inf))
    with np.errstate(divide="ignore"):
        P1 = np.where(a, np.maximum(1.0 / n1 - y1, 0.0), 0.0)
        P2 = np.where(~a, np.maximum(1.0 / n2 - y2, 0.0), 0.0)
    return P1, P2, n1 / LN2, n2 / LN2


def highsnr_waterfill(ch: WidebandChannel, budgets, mu=1.0) -> WidebandAllocation:
    """Water-filling on the upper bound ``log2(1 + max(g11, g21) P1 + max(g12, g22) P2)``.

    Only ``mu = 1`` is supported.  ``info`` holds the upper-bound objective
    ``ub_rate`` and the true objective ``sum max{r1c, r2c}``; for ``L >= 2``
    the two agree because at most one BTS is active on any subcarrier.
    """
    if mu != 1.0:
        raise ValueError("the high-SNR water-filling is defined for mu = 1 only")
    if ch.mode != "scalar":
        raise ChannelError("highsnr_waterfill needs a scalar-mode channel")
    b = PowerBudget.from_seq(budgets)
    g = ch.gains
    G1 = np.maximum(g[:, 0], g[:, 1])
    G2 = np.maximum(g[:, 2], g[:, 3])
    P1, P2, lam1, lam2 = two_level_waterfill(G1, G2, b)
    ub = np.log2(1.0 + G1 * P1 + G2 * P2)
    alloc = _finish(ch, P1, P2, 1.0, ("r1c", "r2c"))
    alloc.lambdas = (lam1, lam2)
    alloc.info = {"ub_rate": float(ub.sum()), "true_rate": alloc.rate,
                  "ub_contributions": ub}
    return alloc


def waterfill_kkt_residual(ch: WidebandChannel, alloc: WidebandAllocation) -> float:
    """Largest ``|marginal rate - lambda_k|`` over subcarriers where BTS ``k`` is active."""
    g = ch.gains
    G = [np.maximum(g[:, 0], g[:, 1]), np.maximum(g[:, 2], g[:, 3])]
    P = [alloc.P1, alloc.P2]
    worst = 0.0
    for k in (0, 1):
        on = P[k] > 0
        if not on.any():
            continue
        marg = G[k][on] / (LN2 * (1.0 + G[0][on] * P[0][on] + G[1][on] * P[1][on]))
        worst = max(worst, float(np.max(np.abs(marg - alloc.lambdas[k]))))
    return worst
