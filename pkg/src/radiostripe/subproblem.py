"""Inner convex problem: optimise (v, Omega) with the auxiliary variables fixed.

The rate variables are eliminated, leaving

    minimise   sum_k w_k e_k(v, Omega, u_k)
    subject to per-AP power constraints and the linearised fronthaul
               constraints (quadratic in v, linear in Omega, minus log-dets),

which is solved by a log-barrier interior-point method with damped Newton
steps on a real parameterisation of (v, Omega).

Every function of the problem has the shape

    c(x) = sum_k v_k^H Q v_k + <C, p> - sum_{j in S} log det Omega_j + const

where p holds the coordinates of the Omega_j in an orthonormal basis of
Hermitian matrices. Derivatives are assembled in closed form from that
shape, so the Newton system costs a handful of dense products.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np
import scipy.linalg as sla

from .channel import CsiRealization, NetworkConfig
from .metrics import LN2, Scheme
from .wmmse import AuxiliaryState


@dataclass(frozen=True)
class SolverSettings:
    tol_feas: float = 1e-7
    tol_kkt: float = 1e-6
    max_newton: int = 200
    max_stages: int = 12
    barrier_factor: float = 10.0
    eps_pd: float = 1e-9      # eigenvalue floor for Omega_i, relative to P_tx
    newton_tol: float = 1e-10

    def __post_init__(self):
        if min(self.tol_feas, self.tol_kkt, self.eps_pd, self.newton_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.barrier_factor <= 1:
            raise ValueError("barrier_factor must exceed 1")


@dataclass(frozen=True)
class SubproblemSpec:
    scheme: Scheme
    aux: AuxiliaryState
    csi: CsiRealization
    cfg: NetworkConfig
    settings: SolverSettings = field(default_factory=SolverSettings)
    per_block: bool = True   # WZ only: also bound each block's own rate, not just the running sums

    def budgets(self) -> np.ndarray:
        """Right-hand sides of the fronthaul constraints in bits."""
        L = self.cfg.num_aps
        b = self.cfg.block_budget
        if Scheme(self.scheme) is Scheme.WZ:
            return b * np.arange(1, L + 1)
        return np.full(L, b)


@dataclass(frozen=True)
class SubproblemSolution:
    precoders: np.ndarray
    quantizers: np.ndarray
    objective: float           # sum_k w_k e_k
    max_violation: float
    kkt_residual: float
    iterations: int
    status: str                # converged | iteration-cap | fallback-to-warm-start


def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal basis (Frobenius inner product) of n x n Hermitian matrices."""
    basis = []
    for a in range(n):
        e = np.zeros((n, n), complex)
        e[a, a] = 1.0
        basis.append(e)
    s = 1.0 / np.sqrt(2.0)
    for a in range(n):
        for b in range(a + 1, n):
            e = np.zeros((n, n), complex)
            e[a, b] = e[b, a] = s
            basis.append(e)
            e = np.zeros((n, n), complex)
            e[a, b] = 1j * s
            e[b, a] = -1j * s
            basis.append(e)
    return np.array(basis)


def _logdet_many(mats: np.ndarray):
    """Log-dets and inverses of a stack of Hermitian matrices, or None if any is not PD."""
    try:
        chol = np.linalg.cholesky(mats)
    except np.linalg.LinAlgError:
        return None
    d = np.real(np.diagonal(chol, axis1=-2, axis2=-1))
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        return None
    return 2.0 * np.sum(np.log(d), axis=-1), chol


def _chol_inverse(chol: np.ndarray) -> np.ndarray:
    linv = np.linalg.inv(chol)
    return np.conj(np.swapaxes(linv, -1, -2)) @ linv


class BarrierProblem:
    """Objective and constraints of one subproblem, in real coordinates."""

    def __init__(self, spec: SubproblemSpec):
        cfg, csi, aux = spec.cfg, spec.csi, spec.aux
        self.spec = spec
        self.K, self.L, self.N = cfg.num_ues, cfg.num_aps, cfg.antennas_per_ap
        K, L, N = self.K, self.L, self.N
        n = self.n = L * N
        self.basis = hermitian_basis(N)
        self.nb = N * N
        self.nv = K * n
        self.dim = 2 * self.nv + L * self.nb
        self.floor = spec.settings.eps_pd * cfg.tx_power
        self.floor_eye = self.floor * np.eye(N)
        self.basis_flat = self.basis.reshape(self.nb, N * N)
        self.basis_flat_t = np.ascontiguousarray(np.swapaxes(self.basis, 1, 2).reshape(self.nb, -1).T)
        self._k_idx = np.arange(K)
        self._l_idx = np.arange(L)
        trace_coef = np.real(np.trace(self.basis, axis1=1, axis2=2))

        # objective: sum_k v_k^H M v_k - 2 Re sum_k b_k^H v_k + <C_f, p> + const
        u, w = aux.receivers, aux.weights
        hh = csi.nominal_channels
        coef = w * np.abs(u) ** 2
        err = np.repeat(csi.error_variances, N, axis=1)           # (K, n)
        self.M = (hh.T * coef) @ hh.conj() + np.diag(coef @ err)
        self.b = (w * u)[:, None] * hh
        self.obj_lin = np.concatenate([self._lin(self.M[j * N:(j + 1) * N, j * N:(j + 1) * N])
                                       for j in range(L)])
        self.obj_const = float(np.sum(w * (1.0 + np.abs(u) ** 2 * cfg.noise_power)))

        # constraints: L power constraints, L fronthaul constraints, then for
        # WZ with per_block the L-1 single-block constraints of blocks 1..L-1
        blocks = (Scheme(spec.scheme) is Scheme.WZ and spec.per_block and L > 1)
        if blocks and aux.side_filters is None:
            raise ValueError("per-block WZ constraints need side-information filters")
        m = self.m = 2 * L + (L - 1 if blocks else 0)
        Q = np.zeros((m, n, n), complex)
        C = np.zeros((m, L * self.nb))
        S = np.zeros((m, L))
        const = np.zeros(m)
        for i in range(L):
            Q[i, i * N:(i + 1) * N, i * N:(i + 1) * N] = np.eye(N)
            C[i, i * self.nb:(i + 1) * self.nb] = trace_coef
            const[i] = -cfg.tx_power
        budgets = spec.budgets() * LN2
        for i, mat in enumerate(aux.matrices):
            span = aux.block_span(i)
            cols = slice(span.start * N, span.stop * N)
            fac = sla.cho_factor(mat, lower=True)
            inv = sla.cho_solve(fac, np.eye(mat.shape[0]))
            inv = 0.5 * (inv + inv.conj().T)
            Q[L + i, cols, cols] = inv
            for j in range(span.start, span.stop):
                jj = slice((j - span.start) * N, (j - span.start + 1) * N)
                C[L + i, j * self.nb:(j + 1) * self.nb] = self._lin(inv[jj, jj])
                S[L + i, j] = 1.0
            ld = 2.0 * np.sum(np.log(np.real(np.diag(fac[0]))))
            const[L + i] = ld - mat.shape[0] - budgets[i]
        if blocks:
            # block i alone: ln det Gamma_i + tr(Gamma_i^{-1}(E_i(F_i) + Omega_i))
            # - N - ln det Omega_i <= b, with E_i(F) = sum_k R v_k v_k^H R^H
            # + F Omega_bar F^H and R = [-F, I] over blocks 0..i
            b = cfg.block_budget * LN2
            for i in range(1, L):
                row = 2 * L + i - 1
                f, gamma = aux.side_filters[i], aux.side_matrices[i]
                fac = sla.cho_factor(gamma, lower=True)
                ginv = sla.cho_solve(fac, np.eye(N))
                ginv = 0.5 * (ginv + ginv.conj().T)
                r = np.hstack([-f, np.eye(N)])
                Q[row, :(i + 1) * N, :(i + 1) * N] = r.conj().T @ ginv @ r
                for j in range(i):
                    fj = f[:, j * N:(j + 1) * N]
                    C[row, j * self.nb:(j + 1) * self.nb] = self._lin(fj.conj().T @ ginv @ fj)
                C[row, i * self.nb:(i + 1) * self.nb] = self._lin(ginv)
                S[row, i] = 1.0
                const[row] = 2.0 * np.sum(np.log(np.real(np.diag(fac[0])))) - N - b
        self.Q, self.C, self.S, self.const = Q, C, S, const
        # barrier parameter multiplies sum_k w_k e_k; duality gap is (m + L N)/t
        self.barrier_count = m + L * N

    def _lin(self, mat) -> np.ndarray:
        return np.real(np.einsum("ij,aji->a", mat, self.basis))

    # coordinates ---------------------------------------------------------
    # x = [Re v_1, Im v_1, ..., Re v_K, Im v_K, p_1, ..., p_L]
    def pack(self, v, omega) -> np.ndarray:
        p = np.real(np.einsum("aij,lji->la", self.basis, omega))
        xv = np.stack([v.real, v.imag], axis=1).ravel()
        return np.concatenate([xv, p.ravel()])

    def unpack(self, x):
        xv = x[:2 * self.nv].reshape(self.K, 2, self.n)
        v = xv[:, 0] + 1j * xv[:, 1]
        p = x[2 * self.nv:]
        omega = (p.reshape(self.L, self.nb) @ self.basis_flat).reshape(self.L, self.N, self.N)
        return v, omega, p

    # evaluation ----------------------------------------------------------
    def evaluate(self, x):
        """Objective, constraint values and log-det data; ``None`` outside the domain."""
        v, omega, p = self.unpack(x)
        # Omega_j and Omega_j - floor*I factorised in one batch
        chol = _logdet_many(np.concatenate([omega, omega - self.floor_eye]))
        if chol is None:
            return None
        ld = chol[0][:self.L]
        qv = self.Q @ v.T                                    # (m, n, K)
        quad = np.real(np.einsum("ak,mak->m", v.T.conj(), qv))
        c = quad + self.C @ p - self.S @ ld + self.const
        mv = self.M @ v.T
        f = (np.real(np.vdot(v.T, mv)) - 2.0 * np.real(np.vdot(self.b, v))
             + self.obj_lin @ p + self.obj_const)
        return dict(f=f, c=c, fl=chol[0][self.L:], mats=chol[1], qv=qv, mv=mv)

    def objective(self, v, omega) -> float:
        return self.evaluate(self.pack(v, omega))["f"]

    def barrier_value(self, ev, t) -> float:
        if ev is None or np.any(ev["c"] >= 0):
            return np.inf
        return t * ev["f"] - np.sum(np.log(-ev["c"])) - np.sum(ev["fl"])

    def _ld_grad_hess(self, chol):
        """Gradient and Hessian blocks of -log det of each factorised matrix."""
        inv = _chol_inverse(chol)                                   # (B, N, N)
        grad = -np.real(inv.reshape(len(inv), -1) @ self.basis_flat_t)
        wb = inv[:, None] @ self.basis[None]                        # (B, nb, N, N)
        hess = np.real(np.einsum("laij,lbji->lab", wb, wb))
        return grad, hess

    def derivatives(self, ev, t):
        """Objective gradient, barrier gradient and barrier Hessian."""
        K, L, nv, nb, m, n = self.K, self.L, self.nv, self.nb, self.m, self.n
        inv_s = -1.0 / ev["c"]
        grads, hessians = self._ld_grad_hess(ev["mats"])
        ld_grad, fl_grad = grads[:L], grads[L:]

        # constraint gradients, one row per constraint
        qv = np.swapaxes(ev["qv"], 1, 2)                           # (m, K, n)
        G = np.empty((m, self.dim))
        G[:, :2 * nv] = 2.0 * np.stack([qv.real, qv.imag], axis=2).reshape(m, 2 * nv)
        G[:, 2 * nv:] = self.C + (self.S[:, :, None] * ld_grad[None]).reshape(m, L * nb)

        gf = np.empty(self.dim)
        gv = 2.0 * (ev["mv"].T - self.b)
        gf[:2 * nv] = np.stack([gv.real, gv.imag], axis=1).ravel()
        gf[2 * nv:] = self.obj_lin

        grad = t * gf + inv_s @ G
        grad[2 * nv:] += fl_grad.ravel()

        hess = (G.T * inv_s ** 2) @ G
        Qeff = t * self.M + np.tensordot(inv_s, self.Q, axes=1)
        block = np.empty((2 * n, 2 * n))
        block[:n, :n] = block[n:, n:] = 2.0 * Qeff.real
        block[:n, n:] = -2.0 * Qeff.imag
        block[n:, :n] = 2.0 * Qeff.imag
        hv = hess[:2 * nv, :2 * nv].reshape(K, 2 * n, K, 2 * n)
        hv[self._k_idx, :, self._k_idx, :] += block
        hp = hess[2 * nv:, 2 * nv:].reshape(L, nb, L, nb)
        hp[self._l_idx, :, self._l_idx, :] += (inv_s @ self.S)[:, None, None] * hessians[:L] + hessians[L:]
        return gf, grad, hess


def _solve_newton(hess, grad):
    try:
        fac = sla.cho_factor(hess, lower=True, check_finite=False)
        return -sla.cho_solve(fac, grad, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        return -np.linalg.lstsq(hess, grad, rcond=None)[0]


def _strict_start(prob: BarrierProblem, v, omega):
    """Shrink the precoders (then also Omega) until the start is strictly interior."""
    for scale_omega in (False, True):
        delta = 0.0
        while delta < 0.5:
            vv = v * (1.0 - delta)
            oo = omega * (1.0 - delta) if scale_omega else omega
            ev = prob.evaluate(prob.pack(vv, oo))
            if ev is not None and np.all(ev["c"] < 0):
                return prob.pack(vv, oo), ev
            delta = 1e-6 if delta == 0.0 else delta * 10.0
    return None, None


def _initial_t(prob: BarrierProblem, ev, settings: SolverSettings) -> float:
    """Barrier weight balancing objective and barrier gradients at the start."""
    gf, gb, hb = prob.derivatives(ev, 0.0)
    try:
        fac = sla.cho_factor(hb, lower=True, check_finite=False)
        hgf = sla.cho_solve(fac, gf, check_finite=False)
        t = -float(gb @ hgf) / float(gf @ hgf)
    except (np.linalg.LinAlgError, ValueError, ZeroDivisionError):
        t = np.nan
    t_min = prob.barrier_count / (settings.tol_kkt * settings.barrier_factor ** (settings.max_stages - 1))
    if not np.isfinite(t) or t <= 0:
        t = prob.barrier_count / max(abs(ev["f"]), 1e-3)
    return float(np.clip(t, max(t_min, 1e-3), prob.barrier_count / settings.tol_kkt))


def solve_subproblem(spec: SubproblemSpec, warm_start, verbose: bool = False,
                     stream: TextIO | None = None, expected_decrease: float | None = None,
                     t_scale: float = 1.0) -> SubproblemSolution:
    """Minimise sum_k w_k e_k over (v, Omega) with the auxiliary state fixed.

    ``expected_decrease`` is a guess of how much the objective can still
    drop from the warm start; when given, the barrier starts at the matching
    duality gap instead of the gradient-balancing heuristic.

    The returned point is never worse than ``warm_start``. When the barrier
    point is worse but the solve reached its duality-gap target, the warm
    start is returned as the (certified) solution. Solver trouble never
    raises: without a strictly feasible start, on a blown-up Newton system,
    or on an uncertified regression the warm start comes back with status
    ``fallback-to-warm-start``.
    """
    settings = spec.settings
    out = stream if stream is not None else sys.stderr
    v0, omega0 = (np.asarray(a) for a in warm_start)
    v0 = v0.astype(complex)
    omega0 = omega0.astype(complex)
    prob = BarrierProblem(spec)
    ev0 = prob.evaluate(prob.pack(v0, omega0))

    def fallback(iters):
        f0 = ev0["f"] if ev0 is not None else np.nan
        viol = float(max(0.0, np.max(ev0["c"]))) if ev0 is not None else np.inf
        return SubproblemSolution(v0, omega0, f0, viol, np.inf, iters, "fallback-to-warm-start")

    x, ev = _strict_start(prob, v0, omega0)
    if x is None:
        return fallback(0)

    if expected_decrease is not None and expected_decrease > 0:
        t = prob.barrier_count / max(expected_decrease, settings.tol_kkt)
    else:
        t = _initial_t(prob, ev, settings)
    t *= t_scale
    total = 0
    status = "converged"
    dec = 0.0
    for stage in range(settings.max_stages):
        for step in range(settings.max_newton):
            _, grad, hess = prob.derivatives(ev, t)
            dx = _solve_newton(hess, grad)
            dec = float(-grad @ dx)
            total += 1
            if verbose:
                print(f"  newton stage={stage} step={step} t={t:.3e} obj={ev['f']:.12g} "
                      f"decrement={dec:.3e}", file=out)
            if not np.isfinite(dec):
                return fallback(total)
            # the decrement has a rounding floor that grows with t
            if dec / 2.0 <= max(settings.newton_tol, 1e-3 * settings.tol_kkt * t):
                break
            phi = prob.barrier_value(ev, t)
            alpha = 1.0
            while alpha > 1e-12:
                ev_new = prob.evaluate(x + alpha * dx)
                if prob.barrier_value(ev_new, t) <= phi - 0.25 * alpha * dec:
                    break
                alpha *= 0.5
            else:
                break
            x = x + alpha * dx
            ev = ev_new
        else:
            status = "iteration-cap"
        if prob.barrier_count / t <= settings.tol_kkt:
            break
        t *= settings.barrier_factor
    else:
        status = "iteration-cap"

    v, omega, _ = prob.unpack(x)
    omega = 0.5 * (omega + np.conj(np.swapaxes(omega, 1, 2)))
    gap = prob.barrier_count / t + max(dec, 0.0) / (2.0 * t)
    viol = float(max(0.0, np.max(ev["c"])))
    if ev0 is not None and ev["f"] > ev0["f"]:
        viol0 = float(max(0.0, np.max(ev0["c"])))
        if status == "converged" and viol0 <= settings.tol_feas:
            # f(x_t) - gap bounds the optimum from below, so the warm start is
            # at least as good a certificate as the barrier point
            return SubproblemSolution(v0, omega0, float(ev0["f"]), viol0, gap, total, status)
        if ev["f"] > ev0["f"] + settings.tol_feas:
            return fallback(total)
    if viol > settings.tol_feas:
        return fallback(total)
    return SubproblemSolution(v, omega, float(ev["f"]), viol, gap, total, status)
