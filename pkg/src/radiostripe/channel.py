"""Network topology, Rayleigh fading and imperfect-CSI generation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

MIN_DISTANCE = 1.0  # meters; keeps the path-loss finite for UEs sitting on an AP


@dataclass(frozen=True)
class NetworkConfig:
    """Scenario scalars for one radio-stripe network.

    ``csi_error_fraction`` is the ratio beta/rho, either a scalar or a
    (num_ues, num_aps) array.
    """

    num_ues: int
    num_aps: int
    antennas_per_ap: int
    tx_power: float = 1.0
    noise_power: float = 1.0
    fronthaul_capacity: float = 1.0
    phase_ratio: float = 1.0
    cell_radius: float = 200.0
    ref_distance: float = 30.0
    ref_pathloss: float = 1.0
    pathloss_exponent: float = 3.0
    csi_error_fraction: float | np.ndarray = 0.1

    def __post_init__(self):
        for name in ("num_ues", "num_aps", "antennas_per_ap"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("tx_power", "noise_power", "fronthaul_capacity", "phase_ratio",
                     "cell_radius", "ref_distance", "ref_pathloss", "pathloss_exponent"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        frac = np.asarray(self.csi_error_fraction, dtype=float)
        if frac.ndim not in (0, 2) or (frac.ndim == 2 and frac.shape != (self.num_ues, self.num_aps)):
            raise ValueError("csi_error_fraction must be a scalar or a (K, L) array")
        if np.any(frac < 0) or np.any(frac > 1):
            raise ValueError("csi_error_fraction must lie in [0, 1]")

    @property
    def snr_db(self) -> float:
        return 10.0 * np.log10(self.tx_power / self.noise_power)

    @property
    def block_budget(self) -> float:
        """Per-block fronthaul budget r*C_F/L in bits per access symbol."""
        return self.phase_ratio * self.fronthaul_capacity / self.num_aps

    @property
    def dim(self) -> int:
        return self.num_aps * self.antennas_per_ap

    def error_fractions(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.csi_error_fraction, dtype=float),
                               (self.num_ues, self.num_aps)).copy()

    def with_updates(self, **changes) -> "NetworkConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class Topology:
    ap_positions: np.ndarray   # (L, 2)
    ue_positions: np.ndarray   # (K, 2)
    distances: np.ndarray      # (K, L)
    pathlosses: np.ndarray     # (K, L)


@dataclass(frozen=True)
class CsiRealization:
    """True channels, their estimates and the per-block error variances.

    Channel vectors are stored row-wise, ``true_channels[k]`` being the
    length N*L stacked vector of UE k. The error covariance of UE k is
    blockdiag(error_variances[k, i] * I_N).
    """

    true_channels: np.ndarray     # (K, N*L) complex
    nominal_channels: np.ndarray  # (K, N*L) complex
    error_variances: np.ndarray   # (K, L) real
    antennas_per_ap: int
    errors: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_ues(self) -> int:
        return self.nominal_channels.shape[0]

    @property
    def num_aps(self) -> int:
        return self.error_variances.shape[1]

    def error_covariance(self, k: int) -> np.ndarray:
        return np.diag(np.repeat(self.error_variances[k], self.antennas_per_ap)).astype(complex)

    @property
    def error_covariances(self) -> np.ndarray:
        return np.stack([self.error_covariance(k) for k in range(self.num_ues)])

    def without_errors(self) -> "CsiRealization":
        """The same estimates with the error covariance forced to zero."""
        return replace(self, error_variances=np.zeros_like(self.error_variances))


def pathloss(distance, cfg: NetworkConfig):
    d = np.maximum(np.asarray(distance, dtype=float), MIN_DISTANCE)
    return cfg.ref_pathloss * (d / cfg.ref_distance) ** (-cfg.pathloss_exponent)


def _rng(seed, stream: int) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng([int(seed), stream])


def ap_positions(num_aps: int, radius: float) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(num_aps) / num_aps
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def generate_topology(cfg: NetworkConfig, seed) -> Topology:
    """Drop UEs uniformly on the disk and place APs evenly on its boundary."""
    rng = _rng(seed, 0)
    radius = cfg.cell_radius * np.sqrt(rng.random(cfg.num_ues))
    theta = 2.0 * np.pi * rng.random(cfg.num_ues)
    ues = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    aps = ap_positions(cfg.num_aps, cfg.cell_radius)
    dist = np.linalg.norm(ues[:, None, :] - aps[None, :, :], axis=-1)
    return Topology(aps, ues, dist, pathloss(dist, cfg))


def sample_csi(topology: Topology, cfg: NetworkConfig, seed) -> CsiRealization:
    """Sample estimate and error independently so that h = h_hat + e exactly.

    Both parts are scaled from the same standard normal draws whatever the
    error fraction, so sweeps over beta/rho stay paired for a given seed.
    """
    rho = topology.pathlosses
    if rho.shape != (cfg.num_ues, cfg.num_aps):
        raise ValueError("topology does not match the configuration")
    beta = cfg.error_fractions() * rho
    if np.any(beta > rho):
        raise ValueError("CSI error variance exceeds the channel power")
    rng = _rng(seed, 1)
    shape = (cfg.num_ues, cfg.num_aps, cfg.antennas_per_ap)
    g_hat = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    g_err = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    h_hat = np.sqrt(rho - beta)[..., None] * g_hat
    err = np.sqrt(beta)[..., None] * g_err
    K, n = cfg.num_ues, cfg.dim
    h_hat = h_hat.reshape(K, n)
    h = h_hat + err.reshape(K, n)
    # stored error re-derived from h so that h - h_hat - e is exactly zero in floating point
    return CsiRealization(h, h_hat, beta, cfg.antennas_per_ap, h - h_hat)
