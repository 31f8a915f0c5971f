"""Monte Carlo sweeps over scenario parameters, with paired trials."""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .channel import NetworkConfig, generate_topology, sample_csi
from .metrics import Scheme
from .optimizer import OptimizerConfig, run
from .subproblem import SolverSettings

log = logging.getLogger(__name__)

AXES = ("snr_db", "num_aps", "fronthaul_capacity", "csi_error_fraction")
MODES = ("robust", "non_robust")
CSV_COLUMNS = ("sweep_axis", "sweep_value", "scheme", "mode", "trial", "seed",
               "sum_rate_bps", "iterations", "runtime_s", "status")


@dataclass(frozen=True)
class ExperimentPlan:
    base: NetworkConfig
    axis: str
    values: tuple
    schemes: tuple = (Scheme.WZ, Scheme.P2P)
    modes: tuple = ("robust",)
    num_trials: int = 50
    base_seed: int = 0
    output: str | None = None
    output_format: str = "csv"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    workers: int = 1
    record_runtime: bool = True

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if not self.values:
            raise ValueError("sweep values must be non-empty")
        if self.num_trials < 1:
            raise ValueError("num_trials must be >= 1")
        if self.output_format not in ("csv", "json"):
            raise ValueError("output format must be csv or json")
        modes = []
        for m in self.modes:
            modes.extend(MODES if m == "both" else [m])
        if any(m not in MODES for m in modes):
            raise ValueError(f"modes must be drawn from {MODES} or 'both'")
        object.__setattr__(self, "modes", tuple(dict.fromkeys(modes)))
        object.__setattr__(self, "schemes", tuple(Scheme(s) for s in self.schemes))
        object.__setattr__(self, "values", tuple(self.values))
        for v in self.values:  # reject values the configuration would refuse
            apply_axis(self.base, self.axis, v)


@dataclass(frozen=True)
class ResultRow:
    sweep_axis: str
    sweep_value: float
    scheme: str
    mode: str
    trial: int
    seed: int
    sum_rate: float
    rates: tuple
    iterations: int
    runtime: float
    status: str


@dataclass(frozen=True)
class AggregateRow:
    sweep_value: float
    scheme: str
    mode: str
    mean_sum_rate: float
    std_error: float
    count: int


def apply_axis(cfg: NetworkConfig, axis: str, value) -> NetworkConfig:
    """Configuration at one sweep point; SNR is swept through P_tx with sigma^2 = 1."""
    if axis == "snr_db":
        return cfg.with_updates(tx_power=10.0 ** (float(value) / 10.0), noise_power=1.0)
    if axis == "num_aps":
        if float(value) != int(value):
            raise ValueError("num_aps sweep values must be integers")
        frac = np.asarray(cfg.csi_error_fraction)
        if frac.ndim:
            raise ValueError("a per-link CSI error fraction cannot be combined with a num_aps sweep")
        return cfg.with_updates(num_aps=int(value))
    if axis == "fronthaul_capacity":
        return cfg.with_updates(fronthaul_capacity=float(value))
    if axis == "csi_error_fraction":
        return cfg.with_updates(csi_error_fraction=float(value))
    raise ValueError(f"unknown axis {axis!r}")


def trial_seed(base_seed: int, trial: int) -> int:
    return int(base_seed) ^ int(trial)


def _run_point(plan: ExperimentPlan, value, trial: int) -> list[ResultRow]:
    """All schemes and modes of one (sweep value, trial) on a shared realization."""
    seed = trial_seed(plan.base_seed, trial)
    rows = []
    try:
        cfg = apply_axis(plan.base, plan.axis, value)
        csi = sample_csi(generate_topology(cfg, seed), cfg, seed)
    except Exception as exc:  # recorded, never aborts the sweep
        return [ResultRow(plan.axis, value, s.value, m, trial, seed, 0.0, (), 0, 0.0, f"error: {exc}")
                for s in plan.schemes for m in plan.modes]
    for scheme in plan.schemes:
        for mode in plan.modes:
            opt = replace(plan.optimizer, scheme=scheme, non_robust=(mode == "non_robust"))
            start = time.perf_counter()
            try:
                res = run(scheme, csi, cfg, opt)
                row = (res.sum_rate, tuple(float(r) for r in res.rates), res.iterations, res.status)
            except Exception as exc:
                log.exception("trial %d at %s=%s failed", trial, plan.axis, value)
                row = (0.0, (), 0, f"error: {exc}")
            elapsed = time.perf_counter() - start if plan.record_runtime else 0.0
            rows.append(ResultRow(plan.axis, value, scheme.value, mode, trial, seed,
                                  row[0], row[1], row[2], elapsed, row[3]))
    return rows


def _row_key(row: ResultRow):
    return (row.sweep_value, row.scheme, row.mode, row.trial)


def run_plan(plan: ExperimentPlan, progress: bool = False):
    """Run every (sweep value, trial) point and return (sorted rows, aggregates)."""
    tasks = [(v, t) for v in plan.values for t in range(plan.num_trials)]
    rows: list[ResultRow] = []
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            futures = [pool.submit(_run_point, plan, v, t) for v, t in tasks]
            for fut in futures:
                rows.extend(fut.result())
    else:
        for n, (v, t) in enumerate(tasks, 1):
            rows.extend(_run_point(plan, v, t))
            if progress:
                log.info("point %d/%d done (%s=%s, trial %d)", n, len(tasks), plan.axis, v, t)
    rows.sort(key=_row_key)
    return rows, aggregate(rows)


def aggregate(rows) -> list[AggregateRow]:
    """Mean and standard error of the sum-rate per (sweep value, scheme, mode).

    Rows whose optimisation raised are left out.
    """
    groups: dict = {}
    for r in rows:
        if r.status.startswith("error"):
            continue
        groups.setdefault((r.sweep_value, r.scheme, r.mode), []).append(r.sum_rate)
    out = []
    for key in sorted(groups):
        vals = np.asarray(groups[key])
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        out.append(AggregateRow(*key, float(vals.mean()), se, len(vals)))
    return out


def _fmt(x) -> str:
    return f"{x:.12g}"


def _record(row: ResultRow) -> dict:
    return {
        "sweep_axis": row.sweep_axis,
        "sweep_value": float(_fmt(row.sweep_value)),
        "scheme": row.scheme,
        "mode": row.mode,
        "trial": row.trial,
        "seed": row.seed,
        "sum_rate_bps": float(_fmt(row.sum_rate)),
        "iterations": row.iterations,
        "runtime_s": float(_fmt(row.runtime)),
        "status": row.status,
    }


def render(rows, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            rec = _record(row)
            writer.writerow([_fmt(rec[c]) if isinstance(rec[c], float) else rec[c] for c in CSV_COLUMNS])
        return buf.getvalue()
    if fmt == "json":
        return json.dumps([_record(r) for r in rows], indent=1) + "\n"
    raise ValueError(f"unknown output format {fmt!r}")


def emit(rows, fmt: str, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render(rows, fmt), encoding="utf-8")
    return path


def format_aggregates(aggs) -> str:
    lines = [f"{'value':>10} {'scheme':>6} {'mode':>10} {'mean':>10} {'stderr':>9} {'n':>4}"]
    for a in aggs:
        lines.append(f"{a.sweep_value:>10g} {a.scheme:>6} {a.mode:>10} "
                     f"{a.mean_sum_rate:>10.4f} {a.std_error:>9.4f} {a.count:>4d}")
    return "\n".join(lines)


# configuration files ------------------------------------------------------

def _parse_list(text: str) -> list[str]:
    return [t for t in text.replace(",", " ").split() if t]


def _number(text: str):
    f = float(text)
    return int(f) if f.is_integer() and "." not in text and "e" not in text.lower() else f


def _flag(text: str) -> bool:
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def read_config(path) -> dict:
    """Read an INI file into a flat dict of harness settings.

    Sections: [network], [optimizer], [subproblem], [harness]. Unknown keys
    are rejected so typos do not silently fall back to defaults.
    """
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    out: dict = {"network": {}, "optimizer": {}, "subproblem": {}, "harness": {}}
    net_keys = {f.name for f in fields(NetworkConfig)} | {"snr_db"}
    allowed = {
        "network": net_keys,
        "optimizer": {"max_iterations", "convergence_threshold", "wz_per_block"},
        "subproblem": {f.name for f in fields(SolverSettings)},
        "harness": {"axis", "values", "schemes", "modes", "trials", "seed", "out",
                    "format", "workers", "record_runtime"},
    }
    for section in parser.sections():
        if section not in allowed:
            raise ValueError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in allowed[section]:
                raise ValueError(f"unknown key {key!r} in [{section}]")
            out[section][key] = raw.strip()
    return out


def build_plan(settings: dict) -> ExperimentPlan:
    """Plan from a ``read_config``-style dict (string values)."""
    net = {k: _number(v) for k, v in settings.get("network", {}).items()}
    if "snr_db" in net:
        net["tx_power"] = 10.0 ** (float(net.pop("snr_db")) / 10.0)
        net["noise_power"] = 1.0
    for key in ("num_ues", "num_aps", "antennas_per_ap"):
        if key in net:
            net[key] = int(net[key])
    base = NetworkConfig(**{"num_ues": 4, "num_aps": 3, "antennas_per_ap": 2, **net})

    solver = SolverSettings(**{k: (int(v) if k in ("max_newton", "max_stages") else float(v))
                               for k, v in settings.get("subproblem", {}).items()})
    o = settings.get("optimizer", {})
    optimizer = OptimizerConfig(
        max_iterations=int(o.get("max_iterations", 100)),
        convergence_threshold=float(o.get("convergence_threshold", 1e-4)),
        wz_per_block=_flag(o.get("wz_per_block", "true")),
        solver=solver,
    )
    h = settings.get("harness", {})
    axis = h.get("axis", "snr_db")
    values = tuple(_number(v) for v in _parse_list(h.get("values", "10")))
    return ExperimentPlan(
        base=base,
        axis=axis,
        values=values,
        schemes=tuple(_parse_list(h.get("schemes", "WZ P2P"))),
        modes=tuple(_parse_list(h.get("modes", "robust"))),
        num_trials=int(h.get("trials", 50)),
        base_seed=int(h.get("seed", 0)),
        output=h.get("out"),
        output_format=h.get("format", "csv"),
        optimizer=optimizer,
        workers=int(h.get("workers", 1)),
        record_runtime=_flag(h.get("record_runtime", "true")),
    )
