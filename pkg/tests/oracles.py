"""Independent reference implementations used as test oracles.

Everything here is written with dense matrices, explicit loops and
``numpy.linalg.slogdet`` so it shares no code path with the package.
"""

import numpy as np
import scipy.linalg as sla

from radiostripe.channel import NetworkConfig, generate_topology, sample_csi


def random_instance(rng, K, L, N, scale=0.5, omega_scale=0.3):
    """Random precoders and PD quantization covariances."""
    v = scale * (rng.standard_normal((K, N * L)) + 1j * rng.standard_normal((K, N * L)))
    omega = []
    for _ in range(L):
        a = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
        omega.append(omega_scale * (a @ a.conj().T + 0.2 * np.eye(N)))
    return v, np.array(omega)


def random_csi(K, L, N, seed, **kw):
    cfg = NetworkConfig(K, L, N, **kw)
    return cfg, sample_csi(generate_topology(cfg, seed), cfg, seed)


def log2det(a):
    sign, ld = np.linalg.slogdet(a)
    assert sign.real > 0
    return ld / np.log(2.0)


def dense_error_cov(csi, k):
    N = csi.antennas_per_ap
    return np.kron(np.diag(csi.error_variances[k]), np.eye(N))


def ref_interference_noise(k, v, omega, csi, sigma2):
    K = v.shape[0]
    hk = csi.nominal_channels[k]
    ek = dense_error_cov(csi, k)
    ob = sla.block_diag(*omega)
    total = 0.0
    for l in range(K):
        if l != k:
            total += abs(np.vdot(hk, v[l])) ** 2
        total += np.real(np.vdot(v[l], ek @ v[l]))
    total += np.real(np.trace((np.outer(hk, hk.conj()) + ek) @ ob))
    return total + sigma2


def ref_rates(v, omega, csi, sigma2):
    out = []
    for k in range(v.shape[0]):
        s = abs(np.vdot(csi.nominal_channels[k], v[k])) ** 2
        out.append(np.log2(1.0 + s / ref_interference_noise(k, v, omega, csi, sigma2)))
    return np.array(out)


def ref_vsum(v):
    return sum(np.outer(vk, vk.conj()) for vk in v)


def ref_g_p2p(i, v, omega):
    N = omega.shape[1]
    blk = ref_vsum(v)[i * N:(i + 1) * N, i * N:(i + 1) * N]
    return log2det(blk + omega[i]) - log2det(omega[i])


def ref_g_wz_schur(i, v, omega):
    """Block rate via the conditional covariance given the earlier reconstructions."""
    N = omega.shape[1]
    vs = ref_vsum(v)
    cur = slice(i * N, (i + 1) * N)
    a = vs[cur, cur]
    if i == 0:
        cond = a
    else:
        prev = slice(0, i * N)
        b = vs[cur, prev]
        c = vs[prev, prev] + sla.block_diag(*omega[:i])
        cond = a - b @ np.linalg.solve(c, b.conj().T)
    return log2det(cond + omega[i]) - log2det(omega[i])
