import math

import numpy as np
import pytest
from scipy.optimize import minimize

from conftest import random_miso
from ncoop.baselines import noncoop_joint_bf
from ncoop.beamforming import (HALF_PI, BeamConfig, BFSearchConfig, beamformer_from_angle,
                               bf_sum_rate, equal_power_bf, frontier_bf, max_weighted_sum_rate_bf,
                               rate_pair_bf, rate_pair_vectors, rate_terms, stream_beamformers,
                               wideband_bf_dual_solve)
from ncoop.channel import MisoChannel, WidebandChannel, generate_wideband_miso


def _cvec(rng, n=2):
    return rng.normal(size=n) + 1j * rng.normal(size=n)


def test_beam_unit_norm_and_span(rng):
    for _ in range(200):
        h_own, h_cross = _cvec(rng, 3), _cvec(rng, 3)
        v = beamformer_from_angle(h_own, h_cross, rng.uniform(0, HALF_PI))
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
        B = np.stack([h_own, h_cross], axis=1)
        coef, *_ = np.linalg.lstsq(B, v, rcond=None)
        assert np.linalg.norm(B @ coef - v) < 1e-10


def test_beam_identities(rng):
    for beta in (None, math.pi / 3, HALF_PI):
        h_own, h_cross = _cvec(rng), _cvec(rng)
        ch = MisoChannel(h_own, h_cross, _cvec(rng), _cvec(rng))
        alpha = ch.alpha1
        b = alpha if beta is None else beta
        v = beamformer_from_angle(h_own, h_cross, b)
        g_own, g_cross = np.vdot(h_own, h_own).real, np.vdot(h_cross, h_cross).real
        assert abs(np.vdot(h_own, v)) ** 2 == pytest.approx(g_own * math.cos(b - alpha) ** 2, abs=1e-10)
        assert abs(np.vdot(h_cross, v)) ** 2 == pytest.approx(g_cross * math.cos(b) ** 2, abs=1e-10)
    # maximum ratio at beta = alpha, full null at pi/2
    v = beamformer_from_angle(h_own, h_cross, HALF_PI)
    assert abs(np.vdot(h_cross, v)) < 1e-12


def test_beam_degenerate_angles():
    h = np.array([1.0 + 0.5j, -0.3j])
    # parallel channels: beam is the channel direction at alpha
    v = beamformer_from_angle(h, 2j * h, 0.0)
    assert abs(np.vdot(h, v)) ** 2 == pytest.approx(np.vdot(h, h).real)
    # orthogonal channels: maximum ratio and zero forcing coincide
    v = beamformer_from_angle(np.array([1, 0j]), np.array([0, 1j]), HALF_PI)
    assert np.allclose(np.abs(v), [1, 0])


def test_vector_and_formula_rates_agree(rng):
    worst = 0.0
    for _ in range(300):
        ch = random_miso(rng, int(rng.integers(2, 5)))
        a = (ch.alpha1, ch.alpha2)
        betas = [rng.uniform(a[0], HALF_PI), rng.uniform(a[0], HALF_PI),
                 rng.uniform(a[1], HALF_PI), rng.uniform(a[1], HALF_PI)]
        cfg = BeamConfig.from_arrays(betas, rng.uniform(0, 5, size=4), a)
        r1, r2 = rate_pair_bf(ch, cfg), rate_pair_vectors(ch, cfg)
        worst = max(worst, abs(r1.R1 - r2.R1), abs(r1.R2 - r2.R2))
    assert worst < 1e-9


def test_zero_forcing_removes_interference(rng):
    ch = random_miso(rng)
    g = ch.gains
    P = (1.0, 2.0, 3.0, 4.0)
    cfg = BeamConfig.from_arrays([HALF_PI] * 4, P, (ch.alpha1, ch.alpha2))
    r = rate_pair_bf(ch, cfg)
    s1, s2 = math.sin(ch.alpha1) ** 2, math.sin(ch.alpha2) ** 2
    assert r.R1 == pytest.approx(math.log2(1 + g.g11 * s1 * 1 + g.g12 * s2 * 3))
    assert r.R2 == pytest.approx(math.log2(1 + g.g21 * s1 * 2 + g.g22 * s2 * 4))
    zero = BeamConfig.from_arrays([HALF_PI] * 4, [0] * 4, (ch.alpha1, ch.alpha2))
    assert (rate_pair_bf(ch, zero).R1, rate_pair_bf(ch, zero).R2) == (0.0, 0.0)


def test_beam_config_validation():
    with pytest.raises(ValueError):
        BeamConfig.from_arrays([2.0, 0, 0, 0], [1, 1, 1, 1])
    with pytest.raises(ValueError):
        BeamConfig.from_arrays([0, 0, 0, 0], [1, -1, 1, 1])


def test_stream_beamformers_shape(rng):
    V = stream_beamformers(random_miso(rng, 3), [1.0, 1.2, 1.3, 1.5])
    assert V.shape == (4, 3)


def test_mu_zero_serves_mobile_one(rng):
    ch = random_miso(rng)
    g = ch.gains
    res = max_weighted_sum_rate_bf(ch, (3, 3), 0.0)
    assert res.rate >= math.log2(1 + g.g11 * 3 + g.g12 * 3) - 1e-6
    assert res.config.P11 == pytest.approx(3) and res.config.P12 == pytest.approx(3)
    assert not res.globally_optimal


def test_orthogonal_channels():
    e1, e2 = np.array([1, 0j]), np.array([0, 1j])
    ch = MisoChannel(2 * e1, 0.5 * e2, 1.5 * e2, e1)     # h11 _|_ h21, h12 _|_ h22
    res = max_weighted_sum_rate_bf(ch, (3, 3), 1.0)
    g = ch.gains
    # no interference at all: best split of two MAC-style links
    s = np.linspace(0, 1, 3001)
    S1, S2 = np.meshgrid(s, s, indexing="ij")
    ref = np.log2(1 + g.g11 * 3 * S1 + g.g12 * 3 * S2) + np.log2(1 + g.g21 * 3 * (1 - S1) + g.g22 * 3 * (1 - S2))
    assert res.rate == pytest.approx(ref.max(), abs=1e-4)
    assert np.allclose(res.config.betas, HALF_PI)


def test_iterative_matches_exhaustive(rng):
    for _ in range(3):
        ch = random_miso(rng)
        it = max_weighted_sum_rate_bf(ch, (3, 3), 1.0, "iterative")
        ex = max_weighted_sum_rate_bf(ch, (3, 3), 1.0, "exhaustive")
        assert abs(it.rate - ex.rate) < 1e-2
        assert it.rate >= ex.rate - 1e-2


def test_full_power_is_optimal(rng):
    # scaling either BTS's powers down never helps
    for _ in range(10):
        ch = random_miso(rng)
        mu = float(rng.uniform(0.2, 3))
        res = max_weighted_sum_rate_bf(ch, (3, 3), mu)
        c = res.config
        base = rate_pair_bf(ch, c).weighted(mu)
        for scale in ((0.99, 1.0), (1.0, 0.99)):
            P = c.powers * np.array([scale[0], scale[0], scale[1], scale[1]])
            shrunk = BeamConfig.from_arrays(c.betas, P, (ch.alpha1, ch.alpha2))
            assert rate_pair_bf(ch, shrunk).weighted(mu) <= base + 1e-12


def test_angles_high_and_low_snr(rng):
    for _ in range(5):
        ch = random_miso(rng)
        hi = max_weighted_sum_rate_bf(ch, (1e4, 1e4), 1.0).config
        assert hi.betas.min() > HALF_PI - 0.2
        lo = max_weighted_sum_rate_bf(ch, (1e-2, 1e-2), 1.0).config
        alpha = np.array([ch.alpha1, ch.alpha1, ch.alpha2, ch.alpha2])
        on = lo.powers > 0
        assert np.all(np.abs(lo.betas - alpha)[on] < 0.2)


def test_frontier_bf_properties(rng):
    ch = random_miso(rng)
    mus = [0.0, 0.3, 1.0, 3.0, 1e4]
    pts = frontier_bf(ch, (3, 3), mus)
    R1 = [p[1].R1 for p in pts]
    R2 = [p[1].R2 for p in pts]
    assert R1[0] >= max(R1) - 1e-6 and R2[-1] >= max(R2) - 1e-6
    for i in range(len(pts)):
        for j in range(len(pts)):
            assert not (R1[j] > R1[i] + 1e-6 and R2[j] > R2[i] + 1e-6)
    with pytest.raises(ValueError):
        frontier_bf(ch, (3, 3), [])


def test_cooperative_contains_noncooperative(rng):
    for _ in range(3):
        ch = random_miso(rng)
        for mu in (0.25, 1.0, 4.0):
            coop = max_weighted_sum_rate_bf(ch, (3, 3), mu).rate
            nc = noncoop_joint_bf(ch, (3, 3), mu)[0]
            assert coop >= nc - 1e-6


# -- wideband ------------------------------------------------------------------

def test_wideband_single_subcarrier():
    ch = generate_wideband_miso(1, 2, (0.5,) * 4, 0.9, 8)
    a = wideband_bf_dual_solve(ch, (3.0, 3.0))
    ref = max_weighted_sum_rate_bf(ch.subcarrier(0), (3, 3), 1.0).rate
    assert a.rate == pytest.approx(ref, abs=1e-3)
    assert a.totals() == pytest.approx((3.0, 3.0))


def _zf_oracle(ch, budgets, mu):
    """Concave zero-forcing problem solved directly with SLSQP."""
    L = ch.L
    s = np.sin(ch.alphas) ** 2
    a = ch.gains * np.stack([s[:, 0], s[:, 0], s[:, 1], s[:, 1]], axis=1)   # (11, 21, 12, 22)

    def neg(x):
        P = x.reshape(L, 4)
        return -np.sum(np.log2(1 + a[:, 0] * P[:, 0] + a[:, 2] * P[:, 2])
                       + mu * np.log2(1 + a[:, 1] * P[:, 1] + a[:, 3] * P[:, 3]))

    cons = [{"type": "eq", "fun": lambda x: x.reshape(L, 4)[:, :2].sum() - budgets[0]},
            {"type": "eq", "fun": lambda x: x.reshape(L, 4)[:, 2:].sum() - budgets[1]}]
    x0 = np.concatenate([np.full(2 * L, budgets[0] / (2 * L)), np.full(2 * L, budgets[1] / (2 * L))])
    x0 = x0.reshape(2, L, 2).transpose(1, 0, 2).reshape(-1)
    best = None
    for _ in range(1):
        r = minimize(neg, x0, method="SLSQP", bounds=[(0, None)] * (4 * L), constraints=cons,
                     options={"ftol": 1e-12, "maxiter": 500})
        best = -r.fun
    return best


def test_zero_forcing_restricted_run():
    ch = generate_wideband_miso(4, 2, (0.5,) * 4, 0.5, 12)
    budgets = (8.0, 8.0)
    a = wideband_bf_dual_solve(ch, budgets, 1.0, cfg=BFSearchConfig(fixed_beta=HALF_PI))
    assert np.allclose(a.beams[:, :4], HALF_PI)
    ref = _zf_oracle(ch, budgets, 1.0)
    assert a.rate == pytest.approx(ref, rel=2e-3)
    assert a.rate <= ref + 1e-6


@pytest.fixture(scope="module")
def bf_solved():
    ch = generate_wideband_miso(32, 2, (0.5,) * 4, 0.95, 1)
    return ch, wideband_bf_dual_solve(ch, (320.0, 320.0))


def test_wideband_invariants(bf_solved):
    ch, a = bf_solved
    assert a.feasible((320, 320))
    assert a.info["weak_duality_ok"]
    assert 0 <= a.relative_gap < 0.01
    assert bf_sum_rate(ch, a, 1.0) == pytest.approx(a.rate, rel=1e-12)
    P = a.beams[:, 4:]
    assert np.allclose(P[:, 0] + P[:, 1], a.P1) and np.allclose(P[:, 2] + P[:, 3], a.P2)
    assert a.rate >= equal_power_bf(ch, (320, 320)).rate - 1e-6


def test_wideband_csv_has_beams(bf_solved):
    ch, a = bf_solved
    header = a.to_csv(ch).split("\r\n")[0].split(",")
    assert header[-8:] == ["beta11", "beta21", "beta12", "beta22", "P11", "P21", "P12", "P22"]


def test_wideband_rejects_scalar_channel():
    from ncoop.channel import ChannelError
    with pytest.raises(ChannelError):
        wideband_bf_dual_solve(WidebandChannel.from_gains(np.ones((2, 4))), (1, 1))


def test_rate_terms_broadcast(rng):
    g = rng.exponential(size=(5, 4))
    alpha = rng.uniform(0, HALF_PI, size=(5, 2))
    beta = np.full((5, 4), HALF_PI)
    P = np.ones((5, 4))
    R1, R2 = rate_terms(g, alpha, beta, P)
    assert R1.shape == (5,) and np.all(R1 >= 0)
    assert rate_terms(g, alpha, beta, P, 2.0) == pytest.approx(R1 + 2 * R2)
