import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import random_csi, random_instance, ref_g_wz_schur
from radiostripe.metrics import (LN2, Scheme, cumulative_wz, g_p2p, g_wz, interference_noise,
                                 logdet, rates)
from radiostripe.wmmse import (AuxiliaryState, block_surrogate, fronthaul_surrogate, mse,
                               surrogate_rates, update_aux, update_receiver, update_sigma,
                               update_theta, update_weight)


def _random_pd(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return a @ a.conj().T + 0.1 * np.eye(n)


def test_weights_must_be_positive():
    with pytest.raises(ValueError):
        AuxiliaryState(np.zeros(1), np.zeros(1), (), Scheme.P2P)


def test_mse_trivial_values():
    cfg, csi = random_csi(2, 2, 2, 0)
    v, omega = random_instance(np.random.default_rng(0), 2, 2, 2)
    assert mse(0, v, omega, 0.0, csi, cfg) == pytest.approx(1.0)
    zero = np.zeros_like(v)
    assert mse(1, zero, omega, 1.0, csi, cfg) == pytest.approx(1.0 + interference_noise(1, zero, omega, csi, cfg))


def test_zero_signal_receiver_and_weight():
    cfg, csi = random_csi(2, 2, 2, 1)
    v, omega = random_instance(np.random.default_rng(1), 2, 2, 2)
    v[0] = 0.0
    assert update_receiver(0, v, omega, csi, cfg) == 0.0
    assert update_weight(0, v, omega, 0.0, csi, cfg) == pytest.approx(1.0)


def test_unit_sinr_weight():
    cfg, csi = random_csi(1, 1, 1, 0, csi_error_fraction=0.0)
    h = csi.nominal_channels[0, 0]
    v = np.array([[h / abs(h) ** 2]])               # |h^* v|^2 = 1 = sigma^2
    omega = np.full((1, 1, 1), 1e-300)
    u = update_receiver(0, v, omega, csi, cfg)
    assert update_weight(0, v, omega, u, csi, cfg) == pytest.approx(2.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 2), st.integers(0, 10_000))
def test_rate_surrogate_tight(K, L, N, seed):
    cfg, csi = random_csi(K, L, N, seed, csi_error_fraction=0.2, tx_power=10.0)
    v, omega = random_instance(np.random.default_rng(seed), K, L, N, scale=5.0)
    aux = update_aux(v, omega, csi, cfg.noise_power, Scheme.WZ)
    r = rates(v, omega, csi, cfg.noise_power)
    np.testing.assert_allclose(surrogate_rates(v, omega, aux, csi, cfg.noise_power), r, atol=1e-9)
    # e_k = 1/(1+SINR_k) and w_k = 1 + SINR_k
    for k in range(K):
        e = mse(k, v, omega, aux.receivers[k], csi, cfg)
        assert e == pytest.approx(2.0 ** -r[k], rel=1e-9)
        assert aux.weights[k] == pytest.approx(2.0 ** r[k], rel=1e-9)


def test_rate_surrogate_is_lower_bound_elsewhere():
    cfg, csi = random_csi(3, 2, 2, 3)
    rng = np.random.default_rng(3)
    v, omega = random_instance(rng, 3, 2, 2, scale=5.0)
    aux = update_aux(v, omega, csi, 1.0, Scheme.P2P)
    v2, omega2 = random_instance(rng, 3, 2, 2, scale=5.0)
    assert np.all(surrogate_rates(v2, omega2, aux, csi, 1.0) <= rates(v2, omega2, csi, 1.0) + 1e-12)


def test_theta_sigma_trivial_values():
    rng = np.random.default_rng(4)
    v, omega = random_instance(rng, 2, 3, 2)
    zero = np.zeros_like(v)
    np.testing.assert_allclose(update_theta(1, zero, omega)[:2, :2], omega[0])
    np.testing.assert_allclose(update_theta(1, zero, omega)[2:, 2:], omega[1])
    np.testing.assert_allclose(update_theta(0, v, omega), update_sigma(0, v, omega))
    np.testing.assert_allclose(update_sigma(2, zero, omega), omega[2])
    vb = v[:, :2]
    np.testing.assert_allclose(update_theta(0, v, omega), vb.T @ vb.conj() + omega[0])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 2), st.integers(0, 10_000))
def test_fronthaul_surrogates_tight(K, L, N, seed):
    v, omega = random_instance(np.random.default_rng(seed), K, L, N, scale=2.0)
    wz = update_aux(v, omega, random_csi(K, L, N, seed)[1], 1.0, Scheme.WZ)
    p2p = update_aux(v, omega, random_csi(K, L, N, seed)[1], 1.0, Scheme.P2P)
    for i in range(L):
        assert fronthaul_surrogate(i, v, omega, wz) == pytest.approx(cumulative_wz(i, v, omega), abs=1e-9)
        assert fronthaul_surrogate(i, v, omega, p2p) == pytest.approx(g_p2p(i, v, omega), abs=1e-9)
        assert block_surrogate(i, v, omega, wz) == pytest.approx(g_wz(i, v, omega), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 2), st.integers(0, 10_000))
def test_fronthaul_majorization_any_theta(K, L, N, seed):
    rng = np.random.default_rng(seed)
    v, omega = random_instance(rng, K, L, N, scale=2.0)
    mats = tuple(_random_pd(rng, N * (i + 1)) for i in range(L))
    aux = AuxiliaryState(np.zeros(K), np.ones(K), mats, Scheme.WZ)
    for i in range(L):
        assert fronthaul_surrogate(i, v, omega, aux) >= cumulative_wz(i, v, omega) - 1e-9
    aux = AuxiliaryState(np.zeros(K), np.ones(K), tuple(_random_pd(rng, N) for _ in range(L)), Scheme.P2P)
    for i in range(L):
        assert fronthaul_surrogate(i, v, omega, aux) >= g_p2p(i, v, omega) - 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(2, 4), st.integers(1, 2), st.integers(0, 10_000))
def test_block_surrogate_upper_bounds_block_rate(K, L, N, seed):
    rng = np.random.default_rng(seed)
    v, omega = random_instance(rng, K, L, N, scale=2.0)
    aux = update_aux(v, omega, random_csi(K, L, N, seed)[1], 1.0, Scheme.WZ)
    v2, omega2 = random_instance(rng, K, L, N, scale=2.0)
    for i in range(L):
        assert block_surrogate(i, v2, omega2, aux) >= ref_g_wz_schur(i, v2, omega2) - 1e-9


def test_block_surrogate_reduces_to_p2p_without_side_information():
    # with one AP the block-0 bound is the P2P bound
    rng = np.random.default_rng(5)
    v, omega = random_instance(rng, 2, 1, 2)
    aux = update_aux(v, omega, random_csi(2, 1, 2, 5)[1], 1.0, Scheme.WZ)
    v2, omega2 = random_instance(rng, 2, 1, 2)
    p2p_aux = AuxiliaryState(aux.receivers, aux.weights, aux.matrices, Scheme.P2P)
    assert block_surrogate(0, v2, omega2, aux) == pytest.approx(fronthaul_surrogate(0, v2, omega2, p2p_aux))


def test_surrogate_identity_hand_check():
    # ln det Theta + tr(Theta^{-1} Theta) - n = ln det Theta
    rng = np.random.default_rng(6)
    v, omega = random_instance(rng, 2, 2, 1)
    theta = update_theta(1, v, omega)
    lhs = logdet(theta) + np.real(np.trace(np.linalg.solve(theta, theta))) - 2
    assert lhs == pytest.approx(logdet(theta), abs=1e-12)
    assert fronthaul_surrogate(1, v, omega, update_aux(v, omega, random_csi(2, 2, 1, 0)[1], 1.0, "WZ")) \
        == pytest.approx((logdet(theta) - logdet(omega[0]) - logdet(omega[1])) / LN2)
