import numpy as np
import pytest

from radiostripe.channel import (MIN_DISTANCE, NetworkConfig, ap_positions, generate_topology,
                                 pathloss, sample_csi)


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        NetworkConfig(0, 2, 2)
    with pytest.raises(ValueError):
        NetworkConfig(2, 2, 2, noise_power=0.0)
    with pytest.raises(ValueError):
        NetworkConfig(2, 2, 2, csi_error_fraction=1.5)
    with pytest.raises(ValueError):
        NetworkConfig(2, 2, 2, csi_error_fraction=np.zeros((3, 2)))


def test_block_budget_and_snr():
    cfg = NetworkConfig(2, 4, 2, tx_power=10.0, fronthaul_capacity=2.0, phase_ratio=2.0)
    assert cfg.block_budget == pytest.approx(1.0)
    assert cfg.snr_db == pytest.approx(10.0)


def test_ap_angles_equal():
    pos = ap_positions(4, 200.0)
    ang = np.sort(np.mod(np.arctan2(pos[:, 1], pos[:, 0]), 2 * np.pi))
    np.testing.assert_allclose(np.diff(ang), np.pi / 2, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(pos, axis=1), 200.0)


def test_pathloss_reference_points():
    cfg = NetworkConfig(1, 1, 1)
    assert pathloss(30.0, cfg) == pytest.approx(1.0)
    assert pathloss(60.0, cfg) == pytest.approx(0.125)
    assert pathloss(0.0, cfg) == pytest.approx((MIN_DISTANCE / 30.0) ** -3)


def test_topology_formula_and_disk():
    cfg = NetworkConfig(200, 5, 1)
    topo = generate_topology(cfg, 3)
    assert np.all(np.linalg.norm(topo.ue_positions, axis=1) <= cfg.cell_radius)
    d = np.linalg.norm(topo.ue_positions[:, None] - topo.ap_positions[None], axis=-1)
    np.testing.assert_allclose(topo.distances, d)
    np.testing.assert_allclose(topo.pathlosses, (np.maximum(d, 1.0) / 30.0) ** -3.0)


def test_uniform_disk_radius_distribution():
    # P(r <= R/2) = 1/4 for a uniform drop on the disk
    cfg = NetworkConfig(20000, 1, 1)
    r = np.linalg.norm(generate_topology(cfg, 0).ue_positions, axis=1)
    assert abs(np.mean(r <= 100.0) - 0.25) < 0.01


def test_reproducible():
    cfg = NetworkConfig(3, 4, 2)
    a = sample_csi(generate_topology(cfg, 7), cfg, 7)
    b = sample_csi(generate_topology(cfg, 7), cfg, 7)
    assert a.true_channels.tobytes() == b.true_channels.tobytes()
    assert a.nominal_channels.tobytes() == b.nominal_channels.tobytes()
    c = sample_csi(generate_topology(cfg, 8), cfg, 8)
    assert not np.allclose(a.true_channels, c.true_channels)


def test_decomposition_exact():
    cfg = NetworkConfig(4, 3, 2, csi_error_fraction=0.3)
    csi = sample_csi(generate_topology(cfg, 1), cfg, 1)
    assert np.all(csi.true_channels - csi.nominal_channels - csi.errors == 0)


def test_perfect_and_fully_unknown_csi():
    cfg = NetworkConfig(3, 2, 2, csi_error_fraction=0.0)
    csi = sample_csi(generate_topology(cfg, 2), cfg, 2)
    assert np.array_equal(csi.true_channels, csi.nominal_channels)
    assert np.all(csi.error_covariances == 0)
    cfg = cfg.with_updates(csi_error_fraction=1.0)
    csi = sample_csi(generate_topology(cfg, 2), cfg, 2)
    assert np.all(csi.nominal_channels == 0)


def test_error_covariance_structure():
    frac = np.array([[0.1, 0.2], [0.0, 0.5]])
    cfg = NetworkConfig(2, 2, 3, csi_error_fraction=frac)
    topo = generate_topology(cfg, 4)
    csi = sample_csi(topo, cfg, 4)
    e1 = csi.error_covariance(1)
    np.testing.assert_allclose(np.diag(e1).real, np.repeat(frac[1] * topo.pathlosses[1], 3))
    assert np.count_nonzero(e1 - np.diag(np.diag(e1))) == 0
    assert np.all(csi.error_variances <= topo.pathlosses)


def test_sample_csi_rejects_mismatched_topology():
    cfg = NetworkConfig(2, 2, 1)
    topo = generate_topology(cfg, 0)
    with pytest.raises(ValueError):
        sample_csi(topo, cfg.with_updates(num_aps=3), 0)


def test_error_and_channel_moments():
    # one UE at a fixed distance, 10^5 independent draws of its channel
    cfg = NetworkConfig(1, 1, 1, csi_error_fraction=0.1)
    topo = generate_topology(cfg, 0)
    rho = topo.pathlosses[0, 0]
    errs, chans = [], []
    for seed in range(100_000 // 1000):
        big = NetworkConfig(1000, 1, 1, csi_error_fraction=0.1)
        t = type(topo)(topo.ap_positions, np.repeat(topo.ue_positions, 1000, axis=0),
                       np.repeat(topo.distances, 1000, axis=0), np.repeat(topo.pathlosses, 1000, axis=0))
        csi = sample_csi(t, big, seed)
        errs.append(csi.errors[:, 0])
        chans.append(csi.true_channels[:, 0])
    e = np.concatenate(errs)
    h = np.concatenate(chans)
    assert np.mean(np.abs(e) ** 2) == pytest.approx(0.1 * rho, rel=0.02)
    for part in (h.real, h.imag):
        assert np.var(part) == pytest.approx(rho / 2, rel=0.02)
    # estimate and error uncorrelated
    assert abs(np.mean(csi.nominal_channels[:, 0].conj() * csi.errors[:, 0])) < 0.02 * rho
