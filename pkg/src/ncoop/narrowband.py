"""Single-subcarrier cooperation: rate pairs, frontier and weighted sum rate.

Rates are in bits per channel use.  ``P_jk`` is the power BTS ``k`` spends on
the message for mobile ``j``; each mobile decodes both pieces of its own
message and treats everything sent to the other mobile as noise.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
import csv
import io
import json
import math

import numpy as np

from .channel import NarrowbandGains, PowerBudget
from .lp import LinearProgram, solve_lp

LOG2E = 1.0 / math.log(2.0)


class RateTargetError(ValueError):
    """Requested rate lies outside the valid range for the given channel."""


@dataclass(frozen=True)
class PowerAllocation:
    P11: float
    P21: float
    P12: float
    P22: float

    def __post_init__(self):
        for name in ("P11", "P21", "P12", "P22"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def from_seq(cls, seq) -> "PowerAllocation":
        if isinstance(seq, PowerAllocation):
            return seq
        return cls(*(float(x) for x in seq))

    def as_array(self) -> np.ndarray:
        return np.array([self.P11, self.P21, self.P12, self.P22])

    def totals(self) -> tuple[float, float]:
        return self.P11 + self.P21, self.P12 + self.P22

    def feasible(self, budget, tol: float = 1e-9) -> bool:
        budget = PowerBudget.from_seq(budget)
        t1, t2 = self.totals()
        return (min(self.as_array()) >= -tol
                and t1 <= budget.P1 + tol and t2 <= budget.P2 + tol)


@dataclass(frozen=True)
class RatePair:
    R1: float
    R2: float

    def weighted(self, mu: float) -> float:
        return self.R1 + mu * self.R2


@dataclass(frozen=True)
class FrontierPoint:
    rates: RatePair
    allocation: PowerAllocation
    regime: str                     # "full-power" | "exclusive"

    def row(self) -> dict:
        return {"R1": self.rates.R1, "R2": self.rates.R2, **asdict(self.allocation),
                "regime": self.regime}


def rate_pair(g, p) -> RatePair:
    g = NarrowbandGains.from_seq(g)
    p = PowerAllocation.from_seq(p)
    s1 = g.g11 * p.P11 + g.g12 * p.P12
    i1 = g.g11 * p.P21 + g.g12 * p.P22
    s2 = g.g21 * p.P21 + g.g22 * p.P22
    i2 = g.g21 * p.P11 + g.g22 * p.P12
    return RatePair(math.log2(1.0 + s1 / (1.0 + i1)), math.log2(1.0 + s2 / (1.0 + i2)))


def rates_array(g, P) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized rate pair; ``g`` and ``P`` broadcast with a trailing axis of 4."""
    g = np.asarray(g, dtype=float)
    P = np.asarray(P, dtype=float)
    g11, g21, g12, g22 = np.moveaxis(g, -1, 0)
    P11, P21, P12, P22 = np.moveaxis(P, -1, 0)
    R1 = np.log2(1.0 + (g11 * P11 + g12 * P12) / (1.0 + g11 * P21 + g12 * P22))
    R2 = np.log2(1.0 + (g21 * P21 + g22 * P22) / (1.0 + g21 * P11 + g22 * P12))
    return R1, R2


def max_rate(g, budget, user: int) -> float:
    """Upper end of the valid rate range of mobile ``user`` (1 or 2)."""
    g = NarrowbandGains.from_seq(g)
    b = PowerBudget.from_seq(budget)
    if user == 1:
        return math.log2(1.0 + g.g11 * b.P1 + g.g12 * b.P2)
    return math.log2(1.0 + g.g21 * b.P1 + g.g22 * b.P2)


def lemma1_check(g, budget, p, tol: float = 1e-6) -> dict:
    """Test the structural condition every frontier allocation must meet.

    When ``(2^R1 - 1)(2^R2 - 1) <= 1`` both BTSs must spend their whole
    budget; above one, each BTS may serve only one of the two messages.
    """
    b = PowerBudget.from_seq(budget)
    p = PowerAllocation.from_seq(p)
    r = rate_pair(g, p)
    product = (2.0 ** r.R1 - 1.0) * (2.0 ** r.R2 - 1.0)
    if product <= 1.0:
        t1, t2 = p.totals()
        ok = abs(t1 - b.P1) <= tol and abs(t2 - b.P2) <= tol
        regime = "full-power"
    else:
        ok = p.P11 * p.P21 <= tol and p.P12 * p.P22 <= tol
        regime = "exclusive"
    return {"regime": regime, "satisfied": bool(ok), "product": product}


def _frontier_lp(g: NarrowbandGains, b: PowerBudget, t: float) -> LinearProgram:
    # variables: scaled powers (P11, P21, P12, P22) * Z and Z
    return LinearProgram(
        c=[0.0, g.g21, 0.0, g.g22, 0.0],
        A_eq=[[g.g11, -t * g.g11, g.g12, -t * g.g12, -t],
              [g.g21, 0.0, g.g22, 0.0, 1.0]],
        b_eq=[0.0, 1.0],
        A_ub=[[1.0, 1.0, 0.0, 0.0, -b.P1],
              [0.0, 0.0, 1.0, 1.0, -b.P2]],
        b_ub=[0.0, 0.0],
    )


def _polish(g, b, P, t1):
    """Move an optimal allocation onto the canonical frontier-structure form.

    Transfers along the direction ``(dP_1k, dP_2k) = (t1, 1) * delta`` keep
    the rate of mobile 1 fixed and never lower the rate of mobile 2 on the
    side of the threshold they are used on.
    """
    r = rate_pair(g, P)
    t2 = 2.0 ** r.R2 - 1.0
    Q = P.as_array().copy()
    budgets = (b.P1, b.P2)
    for k in range(2):
        i1, i2 = 2 * k, 2 * k + 1                  # (P_1k, P_2k) positions
        if t1 * t2 <= 1.0:
            slack = budgets[k] - Q[i1] - Q[i2]
            if slack > 0:
                d = slack / (1.0 + t1)
                Q[i1] += t1 * d
                Q[i2] += d
        elif Q[i1] > 0 and Q[i2] > 0:
            d = min(Q[i2], Q[i1] / t1) if t1 > 0 else Q[i2]
            Q[i1] = max(Q[i1] - t1 * d, 0.0)
            Q[i2] = max(Q[i2] - d, 0.0)
    Q = np.maximum(Q, 0.0)
    cand = PowerAllocation(*Q)
    rc = rate_pair(g, cand)
    if rc.R2 >= r.R2 - 1e-12 and abs(rc.R1 - r.R1) <= 1e-9 * max(1.0, r.R1):
        return cand
    return P


def frontier_point(g, budget, R1_target: float, tol: float = 1e-9) -> FrontierPoint:
    """Largest rate of mobile 2 when mobile 1 gets exactly ``R1_target``.

    The ratio-of-affine objective is turned into a linear program by scaling
    all powers with the reciprocal of mobile 2's interference-plus-noise
    level; powers are recovered by dividing the LP solution by that scale.
    """
    g = NarrowbandGains.from_seq(g)
    b = PowerBudget.from_seq(budget)
    r1max = max_rate(g, b, 1)
    if not (-1e-12 <= R1_target <= r1max * (1 + 1e-12) + 1e-12):
        raise RateTargetError(f"R1 target {R1_target} outside [0, {r1max}]")
    R1_target = min(max(R1_target, 0.0), r1max)

    if R1_target == 0.0:
        p = PowerAllocation(0.0, b.P1, 0.0, b.P2)
    elif R1_target == r1max:
        p = PowerAllocation(b.P1, 0.0, b.P2, 0.0)
    else:
        t = math.expm1(R1_target * math.log(2.0))
        res = solve_lp(_frontier_lp(g, b, t), tol=tol)
        if res.status != "optimal":
            raise RuntimeError(f"frontier LP unexpectedly {res.status} at R1={R1_target}")
        Z = res.x[4]
        if Z <= 0:
            raise RuntimeError("frontier LP returned a non-positive scale variable")
        p = _polish(g, b, PowerAllocation(*(res.x[:4] / Z)), t)
    rp = rate_pair(g, p)
    check = lemma1_check(g, b, p)
    return FrontierPoint(rp, p, check["regime"])


def frontier(g, budget, n_points: int = 101) -> list[FrontierPoint]:
    """Frontier points at ``n_points`` evenly spaced rates of mobile 1."""
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    r1max = max_rate(g, budget, 1)
    targets = np.linspace(0.0, r1max, n_points)
    targets[-1] = r1max
    return [frontier_point(g, budget, float(t)) for t in targets]


# -- weighted sum rate -------------------------------------------------------

CORNERS = ("coop-to-1", "coop-to-2", "coop-swap", "noncoop")
STATIONARY = ("free-P11", "free-P12", "free-P22", "free-P21")


@dataclass(frozen=True)
class WeightedSumRateResult:
    rate: float
    allocation: PowerAllocation
    candidate_id: int
    candidates: tuple = ()          # (id, rate, allocation) for every evaluated candidate

    @property
    def candidate_name(self) -> str:
        return (CORNERS + STATIONARY)[self.candidate_id]

    @property
    def is_corner(self) -> bool:
        return self.candidate_id < 4


def corner_allocations(budget) -> list[PowerAllocation]:
    b = PowerBudget.from_seq(budget)
    return [PowerAllocation(b.P1, 0.0, b.P2, 0.0),
            PowerAllocation(0.0, b.P1, 0.0, b.P2),
            PowerAllocation(0.0, b.P1, b.P2, 0.0),
            PowerAllocation(b.P1, 0.0, 0.0, b.P2)]


def stationary_root(s, A, S, i, wa, wb, cap):
    """Interior maximizer of ``wa*log(1 + s x / A) + wb*log(1 + S / (1 + i x))``.

    The derivative has the sign of ``a x^2 + b x + c`` with ``a >= 0``, so
    the smaller root is where it changes from positive to negative.  Returns
    ``None`` unless that root is real and lies strictly inside ``(0, cap)``.
    """
    a = wa * s * i * i
    bq = wa * s * i * (2.0 + S) - wb * i * S * s
    c = wa * s * (1.0 + S) - wb * i * S * A
    if a == 0.0:
        if bq >= 0.0:
            return None            # derivative positive or increasing: no interior maximum
        x = -c / bq
    else:
        disc = bq * bq - 4.0 * a * c
        if disc < 0.0:
            return None
        sq = math.sqrt(disc)
        # smaller root, written to avoid cancellation
        x = (2.0 * c) / (-bq + sq) if bq < 0 else (-bq - sq) / (2.0 * a)
    if 0.0 < x < cap:
        return x
    return None


def _stationary_families(g: NarrowbandGains, b: PowerBudget, mu: float):
    """``(id, build(x), s, A, S, i, wa, wb, cap)`` for the four one-free-power families."""
    return [
        (4, lambda x: PowerAllocation(x, 0.0, 0.0, b.P2),
         g.g11, 1 + g.g12 * b.P2, g.g22 * b.P2, g.g21, 1.0, mu, b.P1),
        (5, lambda x: PowerAllocation(0.0, b.P1, x, 0.0),
         g.g12, 1 + g.g11 * b.P1, g.g21 * b.P1, g.g22, 1.0, mu, b.P2),
        (6, lambda x: PowerAllocation(b.P1, 0.0, 0.0, x),
         g.g22, 1 + g.g21 * b.P1, g.g11 * b.P1, g.g12, mu, 1.0, b.P2),
        (7, lambda x: PowerAllocation(0.0, x, b.P2, 0.0),
         g.g21, 1 + g.g22 * b.P2, g.g12 * b.P2, g.g11, mu, 1.0, b.P1),
    ]


def max_weighted_sum_rate(g, budget, mu: float) -> WeightedSumRateResult:
    """Maximize ``R1 + mu*R2`` over the per-BTS power constraints.

    The four corner allocations are always evaluated.  For ``mu != 1`` the
    interior stationary points of the four single-free-power families are
    added as candidates.  Ties go to the lowest candidate id.
    """
    if not (mu >= 0 and math.isfinite(mu)):
        raise ValueError("mu must be a finite nonnegative number")
    g = NarrowbandGains.from_seq(g)
    b = PowerBudget.from_seq(budget)
    cands = []
    for cid, p in enumerate(corner_allocations(b)):
        cands.append((cid, rate_pair(g, p).weighted(mu), p))
    if mu != 1.0:
        for cid, build, s, A, S, i, wa, wb, cap in _stationary_families(g, b, mu):
            x = stationary_root(s, A, S, i, wa, wb, cap)
            if x is not None:
                p = build(x)
                cands.append((cid, rate_pair(g, p).weighted(mu), p))
    best = cands[0]
    for c in cands[1:]:
        if c[1] > best[1] + 1e-12:
            best = c
    return WeightedSumRateResult(best[1], best[2], best[0], tuple(cands))


def stationary_family_rate(g, budget, mu: float, candidate_id: int):
    """``R(mu)`` as a function of the free power of a stationary family."""
    g = NarrowbandGains.from_seq(g)
    b = PowerBudget.from_seq(budget)
    fam = {f[0]: f[1] for f in _stationary_families(g, b, mu)}
    build = fam[candidate_id]
    return lambda x: rate_pair(g, build(float(x))).weighted(mu)


# -- serialization -------------------------------------------------------------

FRONTIER_COLUMNS = ("R1", "R2", "P11", "P21", "P12", "P22", "regime")


def frontier_to_csv(points, fh=None) -> str | None:
    """Write frontier points as CSV; returns the text when ``fh`` is None."""
    out = io.StringIO(newline="") if fh is None else fh
    w = csv.DictWriter(out, fieldnames=FRONTIER_COLUMNS, lineterminator="\r\n")
    w.writeheader()
    for p in points:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in p.row().items()})
    return out.getvalue() if fh is None else None


def frontier_to_json(points, **kw) -> str:
    return json.dumps([p.row() for p in points], **kw)


def wsr_to_dict(res: WeightedSumRateResult) -> dict:
    return {"rate": res.rate, "candidate_id": res.candidate_id,
            "candidate": res.candidate_name, **asdict(res.allocation)}
