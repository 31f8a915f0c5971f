"""Closed-form powers, rates and fronthaul compression rates.

Index conventions: UE and AP indices are 0-based. Precoders are passed as a
(K, N*L) complex array whose row k is v_k; quantization covariances as an
(L, N, N) array. Block i of a stacked vector is ``x[..., i*N:(i+1)*N]``.
All rates are reported in bits.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg as sla

from .channel import CsiRealization, NetworkConfig

LN2 = np.log(2.0)


class Scheme(str, Enum):
    WZ = "WZ"
    P2P = "P2P"


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class PrecoderSet:
    vectors: np.ndarray  # (K, N*L)

    def __post_init__(self):
        if self.vectors.ndim != 2 or not np.all(np.isfinite(self.vectors)):
            raise ValueError("precoders must be a finite (K, N*L) array")


@dataclass(frozen=True)
class QuantizerSet:
    covariances: np.ndarray  # (L, N, N)

    def __post_init__(self):
        c = self.covariances
        if c.ndim != 3 or c.shape[1] != c.shape[2]:
            raise ValueError("quantizer covariances must be an (L, N, N) array")
        if not np.allclose(c, np.conj(np.swapaxes(c, 1, 2)), atol=1e-12):
            raise ValueError("quantizer covariances must be Hermitian")

    def min_eigenvalue(self) -> float:
        return float(min(np.linalg.eigvalsh(c)[0] for c in self.covariances))


@dataclass(frozen=True)
class RateReport:
    rates: np.ndarray               # (K,) bits/symbol
    interference_noise: np.ndarray  # (K,)
    ap_powers: np.ndarray           # (L,)
    compression_rates: np.ndarray   # (L,) bits/symbol for ``scheme``
    scheme: Scheme

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.rates))


def logdet(a: np.ndarray) -> float:
    """Natural log-determinant of a Hermitian positive definite matrix."""
    try:
        c = sla.cholesky(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc
    d = np.real(np.diag(c))
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise NotPositiveDefiniteError("matrix is not positive definite")
    return 2.0 * float(np.sum(np.log(d)))


def _as_arrays(v, omega):
    v = v.vectors if isinstance(v, PrecoderSet) else np.asarray(v)
    omega = omega.covariances if isinstance(omega, QuantizerSet) else np.asarray(omega)
    return v, omega


def precoder_covariance(v) -> np.ndarray:
    """V_sum = sum_k v_k v_k^H."""
    v, _ = _as_arrays(v, np.zeros((1, 1, 1)))
    return v.T @ v.conj()


def block_diag(omega, count: int | None = None) -> np.ndarray:
    """blockdiag(Omega_1, ..., Omega_count)."""
    _, omega = _as_arrays(np.zeros((1, 1)), omega)
    count = omega.shape[0] if count is None else count
    return sla.block_diag(*omega[:count]) if count else np.zeros((0, 0), complex)


def per_ap_powers(v, omega) -> np.ndarray:
    v, omega = _as_arrays(v, omega)
    L, N, _ = omega.shape
    blocks = v.reshape(v.shape[0], L, N)
    return np.sum(np.abs(blocks) ** 2, axis=(0, 2)) + np.real(np.trace(omega, axis1=1, axis2=2))


def per_ap_power(v, omega, i: int) -> float:
    """sum_k ||D_i^H v_k||^2 + tr(Omega_i)."""
    return float(per_ap_powers(v, omega)[i])


def interference_noise_all(v, omega, csi: CsiRealization, noise_power: float) -> np.ndarray:
    v, omega = _as_arrays(v, omega)
    L, N, _ = omega.shape
    K = csi.num_ues
    hh = csi.nominal_channels
    gains = np.abs(hh.conj() @ v.T) ** 2          # gains[k, l] = |h_k^H v_l|^2
    cross = gains.sum(axis=1) - np.diag(gains)
    block_energy = np.sum(np.abs(v.reshape(v.shape[0], L, N)) ** 2, axis=(0, 2))  # sum_l ||v_{l,i}||^2
    csi_noise = csi.error_variances @ block_energy
    hb = hh.reshape(K, L, N)
    quant = np.real(np.einsum("kin,inm,kim->k", hb.conj(), omega, hb))
    quant = quant + csi.error_variances @ np.real(np.trace(omega, axis1=1, axis2=2))
    return cross + csi_noise + quant + noise_power


def interference_noise(k: int, v, omega, csi: CsiRealization, cfg: NetworkConfig) -> float:
    return float(interference_noise_all(v, omega, csi, cfg.noise_power)[k])


def signal_gains(v, csi: CsiRealization) -> np.ndarray:
    """h_hat_k^H v_k for every k."""
    v, _ = _as_arrays(v, np.zeros((1, 1, 1)))
    return np.einsum("kn,kn->k", csi.nominal_channels.conj(), v)


def rates(v, omega, csi: CsiRealization, noise_power: float) -> np.ndarray:
    sig = np.abs(signal_gains(v, csi)) ** 2
    return np.log2(1.0 + sig / interference_noise_all(v, omega, csi, noise_power))


def rate(k: int, v, omega, csi: CsiRealization, cfg: NetworkConfig) -> float:
    return float(rates(v, omega, csi, cfg.noise_power)[k])


def _lead_block(vsum, omega, count):
    n = omega.shape[1] * count
    return vsum[:n, :n] + block_diag(omega, count)


def g_p2p(i: int, v, omega) -> float:
    """log2 det(D_i^H V_sum D_i + Omega_i) - log2 det(Omega_i)."""
    v, omega = _as_arrays(v, omega)
    N = omega.shape[1]
    sl = slice(i * N, (i + 1) * N)
    vi = v[:, sl]
    return (logdet(vi.T @ vi.conj() + omega[i]) - logdet(omega[i])) / LN2


def cumulative_wz(i: int, v, omega) -> float:
    """Sum of the WZ rates of blocks 0..i, i.e. log2 det(first i+1 blocks) - sum log2 det(Omega_j)."""
    v, omega = _as_arrays(v, omega)
    N = omega.shape[1]
    n = (i + 1) * N
    vi = v[:, :n]
    total = logdet(vi.T @ vi.conj() + block_diag(omega, i + 1))
    return (total - sum(logdet(omega[j]) for j in range(i + 1))) / LN2


def g_wz(i: int, v, omega) -> float:
    """Conditional rate of block i given the reconstructed blocks 0..i-1."""
    v, omega = _as_arrays(v, omega)
    N = omega.shape[1]
    vsum = precoder_covariance(v)
    cur = logdet(_lead_block(vsum, omega, i + 1))
    prev = logdet(_lead_block(vsum, omega, i)) if i > 0 else 0.0
    return (cur - prev - logdet(omega[i])) / LN2


def compression_rates(v, omega, scheme: Scheme) -> np.ndarray:
    v, omega = _as_arrays(v, omega)
    L = omega.shape[0]
    if Scheme(scheme) is Scheme.P2P:
        return np.array([g_p2p(i, v, omega) for i in range(L)])
    vsum = precoder_covariance(v)
    lead = [0.0] + [logdet(_lead_block(vsum, omega, i + 1)) for i in range(L)]
    return np.array([(lead[i + 1] - lead[i] - logdet(omega[i])) / LN2 for i in range(L)])


def fronthaul_schedule(num_aps: int, slot: int) -> list[tuple[int, int]]:
    """Blocks on the stripe during a fronthaul slot.

    Labels follow the stripe naming: block B_i (1-based) is carried on link
    F_j, where F_{L+1} leaves the CP and F_j joins AP j to AP j-1. Returns
    ``(i, j)`` pairs, newest block first.
    """
    if not 1 <= slot <= num_aps:
        raise ValueError(f"slot must be in 1..{num_aps}")
    return [(i, num_aps + i - slot + 1) for i in range(slot, 0, -1)]


def rate_report(v, omega, csi: CsiRealization, cfg: NetworkConfig, scheme: Scheme) -> RateReport:
    v, omega = _as_arrays(v, omega)
    return RateReport(
        rates=rates(v, omega, csi, cfg.noise_power),
        interference_noise=interference_noise_all(v, omega, csi, cfg.noise_power),
        ap_powers=per_ap_powers(v, omega),
        compression_rates=compression_rates(v, omega, scheme),
        scheme=Scheme(scheme),
    )
