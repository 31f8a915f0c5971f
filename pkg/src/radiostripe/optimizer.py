"""Alternating optimisation of precoders and quantizers (WZ and P2P)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import CsiRealization, NetworkConfig
from .metrics import (NotPositiveDefiniteError, PrecoderSet, QuantizerSet, Scheme,
                      compression_rates, per_ap_powers, rates)
from .subproblem import SolverSettings, SubproblemSpec, solve_subproblem
from .wmmse import surrogate_rates, update_aux

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    scheme: Scheme = Scheme.WZ
    max_iterations: int = 100
    convergence_threshold: float = 1e-4   # bits/symbol change of the sum-rate
    solver: SolverSettings = field(default_factory=SolverSettings)
    non_robust: bool = False
    wz_per_block: bool = True   # False keeps only the running-sum WZ constraints

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.max_iterations < 1 or self.convergence_threshold <= 0:
            raise ValueError("iteration cap and convergence threshold must be positive")


@dataclass(frozen=True)
class FeasibilityReport:
    """Signed slacks; negative entries are violations.

    ``fronthaul_slack`` is r C_F / L - g_X,i for every block, the true
    per-link constraint. ``cumulative_slack`` is i r C_F / L - sum_{j<=i} g_X,j,
    the running-sum form, which is implied by the per-block one but weaker.
    """

    power_slack: np.ndarray
    fronthaul_slack: np.ndarray
    cumulative_slack: np.ndarray
    block_rates: np.ndarray

    @property
    def min_slack(self) -> float:
        return float(min(self.power_slack.min(), self.fronthaul_slack.min()))


@dataclass(frozen=True)
class SolveResult:
    precoders: PrecoderSet
    quantizers: QuantizerSet
    rates: np.ndarray
    sum_rate: float
    trace: tuple                  # sum-rate after initialisation and every outer iteration
    slacks: FeasibilityReport
    iterations: int
    status: str                   # converged | max-iterations | stalled
    surrogate_rates: np.ndarray


def check_feasibility(v, omega, csi: CsiRealization, cfg: NetworkConfig, scheme: Scheme) -> FeasibilityReport:
    """Signed slacks of the exact power and fronthaul constraints."""
    del csi  # the constraints do not involve the channels
    v = np.asarray(v)
    omega = np.asarray(omega)
    power = cfg.tx_power - per_ap_powers(v, omega)
    try:
        g = compression_rates(v, omega, scheme)
    except NotPositiveDefiniteError:
        g = np.full(cfg.num_aps, np.inf)
    fronthaul = cfg.block_budget - g
    cumulative = cfg.block_budget * np.arange(1, cfg.num_aps + 1) - np.cumsum(g)
    return FeasibilityReport(power, fronthaul, cumulative, g)


def initialize(csi: CsiRealization, cfg: NetworkConfig, scheme: Scheme = Scheme.WZ,
               tol_feas: float = 1e-7, bisection_steps: int = 30):
    """Scaled matched-filter precoders with half the power left to quantization noise."""
    K, L, N = cfg.num_ues, cfg.num_aps, cfg.antennas_per_ap
    omega = np.repeat((cfg.tx_power / (2 * N) * np.eye(N))[None], L, axis=0).astype(complex)
    hh = csi.nominal_channels
    norms = np.linalg.norm(hh, axis=1)
    direction = np.zeros_like(hh)
    nz = norms > 0
    direction[nz] = hh[nz] / norms[nz, None]
    base = direction * np.sqrt(cfg.tx_power * L / (2 * K))

    def ok(c):
        rep = check_feasibility(c * base, omega, csi, cfg, scheme)
        return np.all(rep.power_slack >= 0) and np.all(rep.fronthaul_slack >= tol_feas)

    if ok(1.0):
        c = 1.0
    else:
        lo, hi = 0.0, 1.0
        for _ in range(bisection_steps):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
        c = lo
    return c * base, omega


def run(scheme: Scheme, csi: CsiRealization, cfg: NetworkConfig,
        opt_cfg: OptimizerConfig | None = None, init=None, verbose: bool = False) -> SolveResult:
    """Alternate closed-form auxiliary updates with the convex (v, Omega) step.

    In non-robust mode the optimisation sees the channel estimates as exact
    and the returned rates are re-evaluated under the true error covariance.
    """
    scheme = Scheme(scheme)
    opt_cfg = opt_cfg or OptimizerConfig(scheme=scheme)
    design_csi = csi.without_errors() if opt_cfg.non_robust else csi
    sigma2 = cfg.noise_power
    v, omega = init if init is not None else initialize(design_csi, cfg, scheme, opt_cfg.solver.tol_feas)
    v = np.asarray(v, complex)
    omega = np.asarray(omega, complex)

    current = float(np.sum(rates(v, omega, design_csi, sigma2)))
    trace = [current]
    status = "max-iterations"
    fallbacks = 0
    it = 0
    for it in range(1, opt_cfg.max_iterations + 1):
        aux = update_aux(v, omega, design_csi, sigma2, scheme)
        spec = SubproblemSpec(scheme, aux, design_csi, cfg, opt_cfg.solver, opt_cfg.wz_per_block)
        sol = solve_subproblem(spec, (v, omega), t_scale=1e-2 if fallbacks else 1.0)
        if sol.status == "fallback-to-warm-start":
            fallbacks += 1
            if fallbacks >= 2:
                status = "stalled"
                break
            continue
        fallbacks = 0
        v, omega = sol.precoders, sol.quantizers
        new = float(np.sum(rates(v, omega, design_csi, sigma2)))
        trace.append(new)
        if verbose:
            slack = check_feasibility(v, omega, design_csi, cfg, scheme).min_slack
            log.info("iter=%d sum_rate=%.9f max_violation=%.3e subproblem=%s",
                     it, new, max(0.0, -slack), sol.status)
        improved = new - current
        current = new
        if abs(improved) < opt_cfg.convergence_threshold:
            status = "converged"
            break

    aux = update_aux(v, omega, design_csi, sigma2, scheme)
    final_rates = rates(v, omega, csi, sigma2)
    return SolveResult(
        precoders=PrecoderSet(v),
        quantizers=QuantizerSet(omega),
        rates=final_rates,
        sum_rate=float(np.sum(final_rates)),
        trace=tuple(trace),
        slacks=check_feasibility(v, omega, csi, cfg, scheme),
        iterations=it,
        status=status,
        surrogate_rates=surrogate_rates(v, omega, aux, design_csi, sigma2),
    )
