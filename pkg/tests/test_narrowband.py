import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ncoop.baselines import noncoop_power_control
from ncoop.narrowband import (FRONTIER_COLUMNS, PowerAllocation, RateTargetError, frontier,
                              frontier_point, frontier_to_csv, frontier_to_json, lemma1_check,
                              max_rate, max_weighted_sum_rate, rate_pair, stationary_family_rate,
                              wsr_to_dict)
from ncoop.oracle import finite_diff_stationarity, grid_frontier

gain = st.floats(0.05, 5.0)
gains4 = st.tuples(gain, gain, gain, gain)
power = st.floats(0.5, 20.0)


def test_rate_pair_examples():
    r = rate_pair((1, 1, 1, 1), PowerAllocation(5, 0, 5, 0))
    assert r.R1 == pytest.approx(math.log2(11)) and r.R2 == 0.0
    r = rate_pair((2, 1, 1, 2), PowerAllocation(1, 0, 0, 1))
    assert (r.R1, r.R2) == pytest.approx((1.0, 1.0))
    r = rate_pair((1, 2, 3, 4), PowerAllocation(0, 0, 0, 0))
    assert (r.R1, r.R2) == (0.0, 0.0)


def test_frontier_endpoints():
    g, b = (1.3, 0.4, 0.7, 2.1), (5, 3)
    lo = frontier_point(g, b, 0.0)
    assert lo.rates.R2 == pytest.approx(math.log2(1 + 0.4 * 5 + 2.1 * 3), abs=1e-12)
    top = max_rate(g, b, 1)
    hi = frontier_point(g, b, top)
    assert hi.rates.R1 == pytest.approx(top, abs=1e-12)
    assert hi.rates.R2 == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(RateTargetError):
        frontier_point(g, b, top + 0.01)
    with pytest.raises(RateTargetError):
        frontier_point(g, b, -0.01)


def test_frontier_point_example():
    # oracle value from the structure-reduced grid at n_grid=60
    R2_oracle = 1.9475325801058645
    assert grid_frontier((1, 0.3, 0.3, 1), (5, 5), 1.0, n_grid=60)[0] == pytest.approx(R2_oracle, abs=1e-9)
    fp = frontier_point((1, 0.3, 0.3, 1), (5, 5), 1.0)
    assert fp.rates.R1 == pytest.approx(1.0, abs=1e-9)
    assert abs(fp.rates.R2 - R2_oracle) < 0.02


def test_frontier_shape():
    g, b = (1.0, 0.3, 0.3, 1.0), (5, 5)
    pts = frontier(g, b, 2)
    assert pts[0].rates.R1 == 0.0 and pts[1].rates.R2 == pytest.approx(0.0, abs=1e-12)
    pts = frontier(g, b, 31)
    R1 = [p.rates.R1 for p in pts]
    R2 = [p.rates.R2 for p in pts]
    assert np.all(np.diff(R1) > 0)
    assert np.all(np.diff(R2) <= 1e-12)
    with pytest.raises(ValueError):
        frontier(g, b, 1)


def test_cooperation_contains_noncooperation():
    # direct links stronger than cross links, equal budgets of 5
    g, b = (1.0, 0.25, 0.25, 1.0), (5, 5)
    top_nc = math.log2(1 + 5)
    for t in np.linspace(0, top_nc, 15):
        coop = frontier_point(g, b, t).rates.R2
        nc = noncoop_power_control(g, b, t, mode="frontier").value
        assert coop >= nc - 1e-9


@settings(max_examples=40, deadline=None)
@given(gains4, power, power, st.floats(0.0, 1.0))
def test_frontier_points_have_frontier_structure(g, P1, P2, frac):
    t = frac * max_rate(g, (P1, P2), 1)
    fp = frontier_point(g, (P1, P2), t)
    chk = lemma1_check(g, (P1, P2), fp.allocation, tol=1e-6)
    assert chk["satisfied"]
    assert fp.regime == chk["regime"]
    assert fp.allocation.P11 + fp.allocation.P21 <= P1 * (1 + 1e-9)
    assert fp.allocation.P12 + fp.allocation.P22 <= P2 * (1 + 1e-9)


def test_structure_check_examples():
    chk = lemma1_check((2, 1, 1, 2), (1, 1), PowerAllocation(1, 0, 0, 1))
    assert chk["regime"] == "full-power" and chk["satisfied"]
    chk = lemma1_check((5, 0.1, 0.1, 5), (4, 4), PowerAllocation(4, 0, 0, 4))
    assert chk["regime"] == "exclusive" and chk["satisfied"]


def test_structure_check_perturbation():
    # moving power from P12 to idle either breaks the condition or loses rate
    g, b = (1.0, 0.6, 0.8, 1.2), (5, 5)
    for t in np.linspace(0.2, max_rate(g, b, 1) - 0.2, 7):
        fp = frontier_point(g, b, t)
        p = fp.allocation
        if p.P12 < 1e-3:
            continue
        q = PowerAllocation(p.P11, p.P21, p.P12 - 1e-3, p.P22)
        r = rate_pair(g, q)
        dominated = r.R1 <= fp.rates.R1 + 1e-12 and r.R2 <= fp.rates.R2 + 1e-12
        assert (not lemma1_check(g, b, q)["satisfied"]) or dominated


def test_wsr_corner_example():
    res = max_weighted_sum_rate((2, 1, 1, 2), (5, 5), 1.0)
    assert res.rate == pytest.approx(4.0)
    assert res.candidate_id == 0             # tie with corner 1 goes to the lower id
    corner_vals = sorted(c[1] for c in res.candidates)
    assert corner_vals == pytest.approx([1.0811367627254056, 2.830074998557688, 4.0, 4.0])


def test_wsr_mu_zero():
    g, b = (1.2, 0.7, 0.4, 2.0), (3, 4)
    res = max_weighted_sum_rate(g, b, 0.0)
    assert res.candidate_id == 0
    assert res.rate == pytest.approx(math.log2(1 + 1.2 * 3 + 0.4 * 4))


def test_wsr_mu_three_example():
    # brute force over every one-free-power family on a fine grid
    g, b, mu = (1, 0.8, 0.8, 1), (5, 5), 3.0
    res = max_weighted_sum_rate(g, b, mu)
    corners = [c[1] for c in res.candidates if c[0] < 4]
    assert res.rate >= max(corners) - 1e-12
    xs = np.linspace(0, 5, 5001)
    fam = max(max(stationary_family_rate(g, b, mu, cid)(x) for x in xs) for cid in (4, 5, 6, 7))
    assert res.rate == pytest.approx(max(fam, max(corners)), abs=1e-3)
    assert res.rate == pytest.approx(9.965784284662087, abs=1e-12)


def test_wsr_rejects_negative_mu():
    with pytest.raises(ValueError):
        max_weighted_sum_rate((1, 1, 1, 1), (1, 1), -1.0)


@settings(max_examples=40, deadline=None)
@given(gains4, power, power)
def test_mu_one_picks_a_corner(g, P1, P2):
    assert max_weighted_sum_rate(g, (P1, P2), 1.0).is_corner


@settings(max_examples=25, deadline=None)
@given(gains4, power, power, st.floats(0.0, 5.0))
def test_supporting_line(g, P1, P2, mu):
    best = max_weighted_sum_rate(g, (P1, P2), mu).rate
    for fp in frontier(g, (P1, P2), 15):
        assert best >= fp.rates.weighted(mu) - 1e-9


def test_stationary_candidates_are_stationary(rng):
    seen = 0
    for _ in range(400):
        g = rng.exponential(size=4)
        mu = float(rng.choice([0.3, 0.5, 2.0, 3.0]))
        res = max_weighted_sum_rate(g, (5, 5), mu)
        for cid, _, p in res.candidates:
            if cid < 4:
                continue
            x = {4: p.P11, 5: p.P12, 6: p.P22, 7: p.P21}[cid]
            d = finite_diff_stationarity(stationary_family_rate(g, (5, 5), mu, cid), x, 1e-5)
            assert abs(d[0]) < 1e-3
            seen += 1
    assert seen > 10


def test_serialization():
    pts = frontier((1, 0.3, 0.3, 1), (5, 5), 4)
    text = frontier_to_csv(pts)
    lines = text.split("\r\n")
    assert lines[0] == ",".join(FRONTIER_COLUMNS)
    assert len([l for l in lines if l]) == 5
    doc = json.loads(frontier_to_json(pts))
    assert doc[0]["regime"] in ("full-power", "exclusive")
    d = wsr_to_dict(max_weighted_sum_rate((2, 1, 1, 2), (5, 5), 1.0))
    assert d["candidate"] == "coop-to-1" and d["rate"] == pytest.approx(4.0)
