"""Closed-form updates of the auxiliary variables (receivers, weights and
the log-det linearisation points) that make the rate and fronthaul
constraints convex in (v, Omega)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .channel import CsiRealization
from .metrics import (LN2, Scheme, block_diag, interference_noise_all, logdet,
                      signal_gains)


@dataclass(frozen=True)
class AuxiliaryState:
    receivers: np.ndarray        # (K,) complex u_k
    weights: np.ndarray          # (K,) w_k > 0
    matrices: tuple              # Theta_i (size N(i+1)) for WZ, Sigma_i (size N) for P2P
    scheme: Scheme
    side_filters: tuple | None = None  # WZ: LMMSE estimate of block i from blocks 0..i-1 (N x N i)
    side_matrices: tuple | None = None # WZ: Gamma_i, linearisation point of the block-i conditional rate

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")

    def block_span(self, i: int) -> slice:
        """AP blocks covered by the i-th linearisation matrix."""
        return slice(0, i + 1) if self.scheme is Scheme.WZ else slice(i, i + 1)


def mse_all(v, omega, u, csi: CsiRealization, noise_power: float) -> np.ndarray:
    """e_k = |1 - u_k^* h_k^H v_k|^2 + |u_k|^2 IN_k for all k."""
    u = np.asarray(u)
    sig = signal_gains(v, csi)
    inn = interference_noise_all(v, omega, csi, noise_power)
    return np.abs(1.0 - u.conj() * sig) ** 2 + np.abs(u) ** 2 * inn


def mse(k, v, omega, u_k, csi, cfg) -> float:
    u = np.zeros(csi.num_ues, complex)
    u[k] = u_k
    return float(mse_all(v, omega, u, csi, cfg.noise_power)[k])


def update_receivers(v, omega, csi: CsiRealization, noise_power: float) -> np.ndarray:
    sig = signal_gains(v, csi)
    inn = interference_noise_all(v, omega, csi, noise_power)
    return sig / (np.abs(sig) ** 2 + inn)


def update_receiver(k, v, omega, csi, cfg) -> complex:
    return complex(update_receivers(v, omega, csi, cfg.noise_power)[k])


def update_weights(v, omega, u, csi: CsiRealization, noise_power: float) -> np.ndarray:
    e = mse_all(v, omega, u, csi, noise_power)
    if np.any(e <= 0):
        raise ValueError("non-positive MSE; noise power must be positive")
    return 1.0 / e


def update_weight(k, v, omega, u_k, csi, cfg) -> float:
    return 1.0 / mse(k, v, omega, u_k, csi, cfg)


def update_theta(i: int, v, omega) -> np.ndarray:
    """D_bar_i^H V_sum D_bar_i + Omega_bar_i over blocks 0..i."""
    v = np.asarray(v)
    omega = np.asarray(omega)
    n = (i + 1) * omega.shape[1]
    vi = v[:, :n]
    return vi.T @ vi.conj() + block_diag(omega, i + 1)


def update_sigma(i: int, v, omega) -> np.ndarray:
    """Omega_i + D_i^H V_sum D_i."""
    v = np.asarray(v)
    omega = np.asarray(omega)
    N = omega.shape[1]
    vi = v[:, i * N:(i + 1) * N]
    return omega[i] + vi.T @ vi.conj()


def update_side_information(i: int, v, omega):
    """(F_i, Gamma_i) for the per-block WZ bound of block i.

    F_i is the LMMSE estimator of block i of the precoded signal from the
    reconstructions of blocks 0..i-1 and Gamma_i = E_i(F_i) + Omega_i, where
    E_i(F) = sum_k (D_i^H - F D_bar^H) v_k v_k^H (...)^H + F Omega_bar F^H is
    the error covariance of estimator F. With these values the bound below
    equals the exact block rate.
    """
    v = np.asarray(v)
    omega = np.asarray(omega)
    N = omega.shape[1]
    vi = v[:, i * N:(i + 1) * N]
    if i == 0:
        return np.zeros((N, 0), complex), vi.T @ vi.conj() + omega[0]
    prev = v[:, :i * N]
    cov = prev.T @ prev.conj() + block_diag(omega, i)
    cross = vi.T @ prev.conj()                      # E[x_i y_<i^H]
    fac = sla.cho_factor(cov, lower=True)
    f = sla.cho_solve(fac, cross.conj().T).conj().T
    gamma = estimation_error(i, v, omega, f) + omega[i]
    return f, 0.5 * (gamma + gamma.conj().T)


def estimation_error(i: int, v, omega, f) -> np.ndarray:
    """E_i(F): error covariance of estimating block i by F applied to blocks 0..i-1."""
    v = np.asarray(v)
    omega = np.asarray(omega)
    N = omega.shape[1]
    r = v[:, i * N:(i + 1) * N] - v[:, :i * N] @ np.asarray(f).T
    return r.T @ r.conj() + f @ block_diag(omega, i) @ f.conj().T


def update_aux(v, omega, csi: CsiRealization, noise_power: float, scheme: Scheme) -> AuxiliaryState:
    """Receivers first, then weights from those receivers, then Theta/Sigma."""
    scheme = Scheme(scheme)
    u = update_receivers(v, omega, csi, noise_power)
    w = update_weights(v, omega, u, csi, noise_power)
    L = np.asarray(omega).shape[0]
    if scheme is Scheme.WZ:
        mats = tuple(update_theta(i, v, omega) for i in range(L))
        side = [update_side_information(i, v, omega) for i in range(L)]
        return AuxiliaryState(u, w, mats, scheme, tuple(s[0] for s in side), tuple(s[1] for s in side))
    return AuxiliaryState(u, w, tuple(update_sigma(i, v, omega) for i in range(L)), scheme)


def surrogate_rates(v, omega, aux: AuxiliaryState, csi: CsiRealization, noise_power: float) -> np.ndarray:
    """log2 w_k - w_k e_k / ln2 + 1/ln2, a lower bound on each rate."""
    e = mse_all(v, omega, aux.receivers, csi, noise_power)
    w = aux.weights
    return np.log2(w) - (w * e - 1.0) / LN2


def fronthaul_surrogate(i: int, v, omega, aux: AuxiliaryState) -> float:
    """Convexified left-hand side of fronthaul constraint i, in bits.

    For WZ this upper-bounds the cumulative rate of blocks 0..i, for P2P the
    rate of block i alone; equality holds when the linearisation matrix was
    updated at (v, Omega).
    """
    v = np.asarray(v)
    omega = np.asarray(omega)
    N = omega.shape[1]
    span = aux.block_span(i)
    blocks = range(omega.shape[0])[span]
    cols = slice(span.start * N, span.stop * N)
    vi = v[:, cols]
    arg = vi.T @ vi.conj() + sla.block_diag(*omega[span])
    mat = aux.matrices[i]
    fac = sla.cho_factor(mat, lower=True)
    tr = np.real(np.trace(sla.cho_solve(fac, arg)))
    val = logdet(mat) + tr - mat.shape[0] - sum(logdet(omega[j]) for j in blocks)
    return val / LN2



def block_surrogate(i: int, v, omega, aux: AuxiliaryState) -> float:
    """Convex upper bound on the WZ rate of block i alone, in bits.

    ln det Gamma_i + tr(Gamma_i^{-1}(E_i(F_i) + Omega_i)) - N - ln det Omega_i;
    tight when the auxiliary state was updated at (v, Omega).
    """
    if aux.scheme is not Scheme.WZ or aux.side_filters is None:
        raise ValueError("per-block surrogates need a WZ state with side-information filters")
    omega = np.asarray(omega)
    f, gamma = aux.side_filters[i], aux.side_matrices[i]
    arg = estimation_error(i, v, omega, f) + omega[i]
    fac = sla.cho_factor(gamma, lower=True)
    tr = np.real(np.trace(sla.cho_solve(fac, arg)))
    return (logdet(gamma) + tr - gamma.shape[0] - logdet(omega[i])) / LN2
