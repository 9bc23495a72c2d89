import io
import math

import numpy as np
import pytest

from ncoop.baselines import equal_power_coop, noncoop_power_control_wideband
from ncoop.channel import ChannelError, WidebandChannel, generate_wideband_scalar
from ncoop.narrowband import max_weighted_sum_rate
from ncoop.oracle import finite_diff_stationarity, grid_lagrangian, grid_two_carrier
from ncoop.wideband import (ALLOC_COLUMNS, SCHEMES, DualSearchError, SearchConfig,
                            WidebandAllocation, _check_monotone, best_rates, dual_solve,
                            fixed_allocation, highsnr_waterfill, inner_maximize, scheme_rates,
                            subcarrier_best_rate, sum_rate, two_level_waterfill,
                            waterfill_kkt_residual)


def reference_rates(g, P1, P2, mu):
    """Scheme rates written out longhand, one subcarrier at a time."""
    g11, g21, g12, g22 = g
    lg = math.log2
    return [
        lg(1 + g11 * P1 + g12 * P2),
        mu * lg(1 + g21 * P1 + g22 * P2),
        lg(1 + g12 * P2 / (1 + g11 * P1)) + mu * lg(1 + g21 * P1 / (1 + g22 * P2)),
        lg(1 + g11 * P1 / (1 + g12 * P2)) + mu * lg(1 + g22 * P2 / (1 + g21 * P1)),
    ]


def test_scheme_rates_match_longhand(rng):
    for _ in range(50):
        g = rng.exponential(size=4)
        P1, P2, mu = rng.uniform(0, 10, size=3)
        assert scheme_rates(g, P1, P2, mu) == pytest.approx(reference_rates(g, P1, P2, mu), rel=1e-12)


def test_subcarrier_best_rate_examples():
    r = subcarrier_best_rate((1, 1, 1, 1), 0.0, 0.0, 1.0)
    assert r["value"] == 0.0 and r["scheme"] == "r1c"
    r = subcarrier_best_rate((1, 1, 1, 1), 10.0, 10.0, 1.0)
    assert r["value"] == pytest.approx(math.log2(21))
    assert r["scheme"] in ("r1c", "r2c")
    assert r["value"] > r["options"].rnc
    assert r["options"].rnc == pytest.approx(2 * math.log2(1 + 10 / 11))
    with pytest.raises(ValueError):
        subcarrier_best_rate((1, 1, 1, 1), -1.0, 0.0, 1.0)


def test_mu_zero_never_prefers_mobile_two(rng):
    for _ in range(100):
        g = rng.exponential(size=4)
        P1, P2 = rng.uniform(0.01, 10, size=2)
        assert subcarrier_best_rate(g, P1, P2, 0.0)["scheme"] != "r2c"


def test_inner_large_multipliers():
    r = inner_maximize((1.0, 2.0, 0.5, 3.0), 100.0, 100.0, 1.0)
    assert (r["P1l"], r["P2l"]) == (0.0, 0.0)
    assert r["lagrangian_value"] == 0.0


def test_inner_symmetric():
    a = inner_maximize((1, 1, 1, 1), 0.3, 0.3, 1.0)
    assert a["P1l"] == pytest.approx(a["P2l"], rel=1e-6) or \
        a["lagrangian_value"] == pytest.approx(inner_maximize((1, 1, 1, 1), 0.3, 0.3, 1.0)["lagrangian_value"])
    # value at the swapped point is the same
    g = np.array([1.0, 1.0, 1.0, 1.0])
    v1 = best_rates(g, a["P1l"], a["P2l"], 1.0)[0]
    v2 = best_rates(g, a["P2l"], a["P1l"], 1.0)[0]
    assert v1 == pytest.approx(v2, rel=1e-12)


def test_inner_against_grid():
    # 400 x 400 brute force on [0, 20]^2; value frozen from that oracle
    oracle = 2.2369231296160965
    g = np.array([2.0, 0.1, 0.1, 2.0])
    v, _, _ = grid_lagrangian(lambda a, b: best_rates(g, a, b, 1.0)[0], 0.5, 0.5)
    assert v == pytest.approx(oracle, abs=1e-12)
    r = inner_maximize(g, 0.5, 0.5, 1.0)
    assert abs(r["lagrangian_value"] - oracle) < 1e-3
    assert r["lagrangian_value"] >= oracle - 1e-9


def test_inner_unbounded_flag():
    r = inner_maximize((1, 1, 1, 1), 0.0, 0.5, 1.0)
    assert r["unbounded"]
    r = inner_maximize((1, 1, 1, 1), 0.0, 0.5, 1.0, SearchConfig(cap=(10.0, 10.0)))
    assert not r["unbounded"]


def test_dual_single_subcarrier():
    g = np.array([[1.3, 0.4, 0.8, 2.2]])
    ch = WidebandChannel.from_gains(g)
    a = dual_solve(ch, (5.0, 5.0), 1.0)
    assert a.totals() == pytest.approx((5.0, 5.0))
    assert a.rate == pytest.approx(max_weighted_sum_rate(g[0], (5, 5), 1.0).rate, abs=1e-6)


def test_dual_two_carriers_strong_weak():
    weak = np.array([0.02, 0.01, 0.015, 0.025])
    gains = np.vstack([100 * weak, weak])
    ch = WidebandChannel.from_gains(gains)
    a = dual_solve(ch, (10.0, 10.0), 1.0)
    assert a.P1[0] >= 0.95 * 10 and a.P2[0] >= 0.95 * 10

    def rate(g, p1, p2):
        return best_rates(np.asarray(g), p1, p2, 1.0)[0]

    v, fa, fb = grid_two_carrier(rate, gains, (10.0, 10.0), n=201)
    assert fa >= 0.95 and fb >= 0.95
    assert a.rate >= v - 1e-3


@pytest.fixture(scope="module")
def solved():
    ch = generate_wideband_scalar(64, (1, 1, 1, 1), 0.95, 4)
    return ch, dual_solve(ch, (64 * 10.0, 64 * 10.0), 1.0)


def test_dual_invariants(solved):
    ch, a = solved
    assert a.feasible((640, 640))
    assert a.totals() == pytest.approx((640, 640), rel=1e-9)
    assert a.info["weak_duality_ok"]
    assert all(t[4] >= a.info["grid_primal"] - 1e-9 for t in a.info["trace"])
    assert 0 <= a.relative_gap < 0.01
    assert a.dual_value >= a.rate
    assert sum_rate(ch, a, 1.0) == pytest.approx(a.rate, rel=1e-12)
    assert set(a.schemes) <= set(SCHEMES)


def test_dual_dominates_baselines(solved):
    ch, a = solved
    assert a.rate >= equal_power_coop(ch, (640, 640), 1.0).rate - 1e-6
    assert a.rate >= noncoop_power_control_wideband(ch, (640, 640), 1.0).rate - 1e-6


def test_power_monotone_in_multiplier(solved):
    _, a = solved
    tr = np.array(a.info["trace"])
    # along each inner bisection (fixed lambda1) BTS 2 power falls as lambda2 rises
    for l1 in np.unique(tr[:, 0]):
        sub = tr[tr[:, 0] == l1]
        order = np.argsort(sub[:, 1])
        assert np.all(np.diff(sub[order, 3]) <= 1e-6 * 640)


def test_flat_channel_equal_power_is_optimal():
    # mobile 1 dominates both links, so the per-subcarrier rate is the concave r1c
    ch = WidebandChannel.from_gains(np.tile([1.0, 0.1, 0.8, 0.1], (16, 1)))
    d = dual_solve(ch, (16 * 4.0, 16 * 4.0), 1.0)
    e = equal_power_coop(ch, (16 * 4.0, 16 * 4.0), 1.0)
    assert d.rate == pytest.approx(e.rate, rel=1e-6)
    assert d.rate >= e.rate - 1e-6


def test_flat_channel_time_sharing_beats_equal_power():
    # the best-of-schemes rate is not concave; splitting subcarriers between schemes can win
    ch = WidebandChannel.from_gains(np.tile([1.0, 0.4, 0.6, 1.2], (16, 1)))
    d = dual_solve(ch, (16 * 4.0, 16 * 4.0), 1.0)
    e = equal_power_coop(ch, (16 * 4.0, 16 * 4.0), 1.0)
    assert d.rate > e.rate + 0.5
    assert len(set(d.schemes)) > 1


def test_monotone_diagnostic():
    with pytest.raises(DualSearchError):
        _check_monotone([(0.0, 5.0), (1.0, 3.0), (2.0, 4.0)], 10.0, "BTS 1", 1e-6)
    _check_monotone([(0.0, 5.0), (1.0, 3.0), (2.0, 1.0)], 10.0, "BTS 1", 1e-6)


def test_dual_rejects_bad_input():
    with pytest.raises(ValueError):
        dual_solve(generate_wideband_scalar(4, (1, 1, 1, 1), 0.5, 0), (0.0, 1.0))
    from ncoop.channel import generate_wideband_miso
    with pytest.raises(ChannelError):
        dual_solve(generate_wideband_miso(4, 2, (1, 1, 1, 1), 0.5, 0), (1.0, 1.0))


def test_noncoop_dual_uses_only_own_streams(solved):
    ch, _ = solved
    a = noncoop_power_control_wideband(ch, (640, 640), 1.0, allocation="dual")
    assert set(a.schemes) == {"rnc"}


# -- high-SNR water-filling ------------------------------------------------------

def test_waterfill_single_subcarrier():
    g = np.array([[1.0, 0.5, 0.3, 2.0]])
    a = highsnr_waterfill(WidebandChannel.from_gains(g), (3.0, 4.0))
    assert a.info["ub_rate"] == pytest.approx(math.log2(1 + 1.0 * 3 + 2.0 * 4))
    assert a.rate < a.info["ub_rate"]
    assert waterfill_kkt_residual(WidebandChannel.from_gains(g), a) < 1e-12


def test_waterfill_flat_channel():
    ch = WidebandChannel.from_gains(np.tile([0.7, 1.1, 0.3, 0.9], (8, 1)))
    a = highsnr_waterfill(ch, (16.0, 0.0))
    assert np.allclose(a.P1, 2.0) and np.all(a.P2 == 0)


def test_waterfill_two_levels():
    # y1 = (0.1, 1.0): P1(1) - P1(2) = 0.9 while both are on
    P1, P2, lam1, _ = two_level_waterfill([10.0, 1.0], [1.0, 1.0], (5.0, 0.0))
    assert P1[0] - P1[1] == pytest.approx(0.9, abs=1e-12)
    assert P1.sum() == pytest.approx(5.0)
    assert lam1 * math.log(2) == pytest.approx(1 / (P1[0] + 0.1))


def test_waterfill_identities():
    for seed in range(5):
        ch = generate_wideband_scalar(128, (1, 1, 1, 1), 0.95, seed)
        a = highsnr_waterfill(ch, (128 * 10.0, 128 * 10.0))
        assert not np.any((a.P1 > 0) & (a.P2 > 0))
        assert a.rate == pytest.approx(a.info["ub_rate"], abs=1e-9)
        assert waterfill_kkt_residual(ch, a) < 1e-6
        assert a.totals() == pytest.approx((1280, 1280), rel=1e-9)


def test_waterfill_kkt_by_finite_differences():
    ch = generate_wideband_scalar(16, (1, 1, 1, 1), 0.9, 3)
    a = highsnr_waterfill(ch, (40.0, 40.0))
    G1 = np.maximum(ch.gains[:, 0], ch.gains[:, 1])
    G2 = np.maximum(ch.gains[:, 2], ch.gains[:, 3])
    for l in np.flatnonzero(a.P1 > 0):
        f = lambda x: math.log2(1 + G1[l] * x + G2[l] * a.P2[l])
        assert finite_diff_stationarity(f, a.P1[l], 1e-5)[0] == pytest.approx(a.lambdas[0], abs=1e-6)


def test_waterfill_mu_guard():
    with pytest.raises(ValueError):
        highsnr_waterfill(generate_wideband_scalar(4, (1, 1, 1, 1), 0.5, 0), (4, 4), mu=2.0)


# -- evaluation and serialization -----------------------------------------------

def test_sum_rate_cases(rng):
    ch = generate_wideband_scalar(10, (1, 1, 1, 1), 0.5, 9)
    zero = fixed_allocation(ch, np.zeros(10), np.zeros(10), 1.0)
    assert sum_rate(ch, zero, 1.0) == 0.0
    one = WidebandChannel.from_gains(ch.gains[:1])
    a = fixed_allocation(one, np.array([2.0]), np.array([3.0]), 0.7)
    assert sum_rate(one, a, 0.7) == pytest.approx(subcarrier_best_rate(ch.gains[0], 2.0, 3.0, 0.7)["value"])
    # random tags re-evaluated longhand
    P1, P2 = rng.uniform(0, 5, size=(2, 10))
    tags = list(rng.choice(SCHEMES, size=10))
    alloc = WidebandAllocation(P1=P1, P2=P2, schemes=tags, rate=math.nan)
    ref = sum(reference_rates(ch.gains[l], P1[l], P2[l], 0.8)[SCHEMES.index(tags[l])] for l in range(10))
    assert sum_rate(ch, alloc, 0.8) == pytest.approx(ref, rel=1e-12)


def test_allocation_csv(solved):
    ch, a = solved
    text = a.to_csv(ch)
    rows = text.split("\r\n")
    assert rows[0] == ",".join(ALLOC_COLUMNS)
    assert len([r for r in rows if r]) == ch.L + 1
    buf = io.StringIO()
    a.to_csv(ch, buf)
    assert buf.getvalue() == text
    doc = a.to_dict()
    assert doc["lambdas"] == list(a.lambdas) and "trace" not in doc
