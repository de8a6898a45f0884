from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irs_ofdma.channel import (
    SystemConfig,
    build_cascaded,
    cascade,
    draw_realization,
    exponential_pdp,
    link_budget,
    sample_rayleigh_taps,
    sample_rician_user_irs,
    superimpose,
)
from irs_ofdma.errors import InvalidArgumentError


def test_pdp_two_taps_decay_two():
    np.testing.assert_allclose(exponential_pdp(2, 2.0), [2 / 3, 1 / 3])


def test_pdp_single_tap_is_unit():
    np.testing.assert_allclose(exponential_pdp(1, 5.0), [1.0])


@given(taps=st.integers(1, 12), decay=st.floats(1.01, 10.0))
def test_pdp_sums_to_one_and_decays(taps, decay):
    p = exponential_pdp(taps, decay)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.all(np.diff(p) < 0)


@pytest.mark.parametrize("taps,decay", [(0, 2.0), (3, 0.0), (3, -1.0)])
def test_pdp_rejects_bad_arguments(taps, decay):
    with pytest.raises(InvalidArgumentError):
        exponential_pdp(taps, decay)


def test_rayleigh_tap_powers_follow_profile(rng):
    profile = exponential_pdp(4, 2.0)
    draws = np.stack([sample_rayleigh_taps(4, profile, rng) for _ in range(20000)])
    np.testing.assert_allclose(np.mean(np.abs(draws) ** 2, axis=0), profile, rtol=0.05)


def test_rayleigh_rejects_unnormalized_profile(rng):
    with pytest.raises(InvalidArgumentError):
        sample_rayleigh_taps(2, np.array([0.5, 0.6]), rng)


def test_rician_single_tap_is_unit_modulus(rng):
    u = sample_rician_user_irs(1, 8, 10 ** 0.45, rng)
    assert u.shape == (1, 8)
    np.testing.assert_allclose(np.abs(u), 1.0)


def test_rician_power_split(rng):
    kappa = 10 ** 0.45
    draws = np.stack([sample_rician_user_irs(2, 4, kappa, rng) for _ in range(5000)])
    np.testing.assert_allclose(np.abs(draws[:, 0]) ** 2, kappa / (kappa + 1))
    nlos = np.mean(np.abs(draws[:, 1]) ** 2)
    assert nlos == pytest.approx(1 / (kappa + 1), rel=0.05)


def test_rician_infinite_kappa_has_no_scatter(rng):
    u = sample_rician_user_irs(3, 5, math.inf, rng)
    np.testing.assert_allclose(u[1:], 0.0)


def test_cascade_matches_hand_convolution():
    out = cascade(np.array([1.0, 2.0]), np.array([1.0, 1.0, 1.0]), 5)
    np.testing.assert_allclose(out, [1, 3, 3, 2, 0])


def test_cascade_rejects_short_target():
    with pytest.raises(InvalidArgumentError):
        cascade(np.ones(2), np.ones(3), 3)


@given(
    L1=st.integers(1, 4),
    L2=st.integers(1, 3),
    extra=st.integers(0, 2),
    seed=st.integers(0, 2**32 - 1),
)
def test_build_cascaded_agrees_with_columnwise_convolution(L1, L2, extra, seed):
    rng = np.random.default_rng(seed)
    L = L1 + L2 - 1 + extra
    G = rng.standard_normal((L1, 3)) + 1j * rng.standard_normal((L1, 3))
    U = rng.standard_normal((2, L2, 3)) + 1j * rng.standard_normal((2, L2, 3))
    Q = build_cascaded(G, U, L)
    for k in range(2):
        for m in range(3):
            np.testing.assert_allclose(Q[k, :, m], cascade(U[k, :, m], G[:, m], L), atol=1e-12)


def test_superimpose_shape_check():
    with pytest.raises(InvalidArgumentError):
        superimpose(np.ones((4, 3)), np.ones(2), np.ones(4))


def test_superimpose_value():
    Q = np.arange(6.0).reshape(2, 3)
    np.testing.assert_allclose(superimpose(Q, np.ones(3), np.array([1.0, -1.0])), [4.0, 11.0])


def test_default_config_dimensions():
    cfg = SystemConfig()
    assert (cfg.N, cfg.M, cfg.M0, cfg.Ld, cfg.Lcp) == (16, 8, 128, 4, 6)
    assert cfg.eta == 16
    assert cfg.L == 4
    assert cfg.tau == 9
    assert cfg.replace(scheme="seuce", L1=4, L2=1).L == 4


@pytest.mark.parametrize(
    "changes",
    [dict(M0=100), dict(Lcp=2), dict(L1=10), dict(scheme="joint"), dict(kappa=0.0), dict(K=0)],
)
def test_config_rejects_inconsistent_values(changes):
    with pytest.raises(InvalidArgumentError):
        SystemConfig(**changes)


def test_link_budget_matches_closed_form():
    cfg = SystemConfig(P=0.01)
    g0 = 1e-3
    reflect = 128 * g0**2 * 1.5**-2.2 * 50**-2.4
    direct = g0 * cfg.D3**-3.5
    expected = 0.01 * (reflect + direct) / (1e-11 * 16)
    assert link_budget(cfg, cfg.D1, cfg.D2, cfg.D3, 2.2, 2.4, 3.5, g0) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("snr_db", [-10.0, 0.0, 10.0, 30.0])
def test_with_snr_db_round_trips(snr_db):
    cfg = SystemConfig().with_snr_db(snr_db)
    assert 10 * math.log10(cfg.snr()) == pytest.approx(snr_db, abs=1e-9)


def test_user_ap_distance_geometry():
    cfg = SystemConfig()
    assert cfg.D3 == pytest.approx(math.hypot(50.0, 1.5))
    assert SystemConfig(user_angle_deg=0.0).D3 == pytest.approx(48.5)


def test_realization_shapes_and_reference_gains(rng):
    cfg = SystemConfig(K=3, L1=4, L2=1, scheme="seuce")
    r = draw_realization(cfg, rng)
    assert r.d.shape == (3, cfg.L)
    assert r.Q.shape == (3, cfg.L, cfg.M)
    np.testing.assert_allclose(r.a(0), 1.0)
    for k in range(3):
        np.testing.assert_allclose(r.Q[k], r.Q[0] * r.a(k)[None, :], atol=1e-20)


def test_realization_is_seed_deterministic():
    cfg = SystemConfig()
    a = draw_realization(cfg, np.random.default_rng(7))
    b = draw_realization(cfg, np.random.default_rng(7))
    np.testing.assert_array_equal(a.Q, b.Q)
    np.testing.assert_array_equal(a.d, b.d)


def test_direct_taps_beyond_ld_are_zero(rng):
    cfg = SystemConfig(L1=4, L2=3, Ld=2, Lcp=6)
    r = draw_realization(cfg, rng)
    np.testing.assert_array_equal(r.d[:, 2:], 0.0)
