"""Monte-Carlo sweeps: one row per (seed, scheme, axis point).

Every scheme at a given seed and point consumes the same channel draw, so
scheme gaps can be averaged as paired differences.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .clustering import SCHEMES, design_sets
from .model import ConfigError, validate_config
from .rates import evaluate
from .scenario import ScenarioSpec, generate, make_config
from .wmmse import AlgorithmError, AlgorithmOptions, run_algorithm1

log = logging.getLogger(__name__)

COLUMNS = ("seed", "scheme", "N_R", "N_U", "n_R", "P_dBm", "C", "r_min_bits",
           "iterations", "converged", "wall_s", "error")
AXES = ("power_dbm", "num_ues")


@dataclass(frozen=True)
class SweepPoint:
    num_rrhs: int
    num_ues: int
    antennas: tuple
    power_dbm: float
    fronthaul: float

    @property
    def total_antennas(self) -> int:
        return int(sum(self.antennas))


@dataclass(frozen=True)
class SweepSpec:
    """Sweep over transmit power or UE count; seeds default to ``0..num_seeds-1``."""

    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    num_rrhs: int = 4
    num_ues: int = 8
    antennas: tuple = (1, 1, 1, 1)
    fronthaul_capacity: float = 10.0
    power_dbm: float = 43.0
    axis: str = "power_dbm"
    values: tuple = (23.0, 33.0, 43.0)
    schemes: tuple = SCHEMES
    num_seeds: int = 50
    seeds: tuple | None = None
    options: AlgorithmOptions = field(default_factory=AlgorithmOptions)
    workers: int = 1

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}")
        if not self.values:
            raise ConfigError("values: sweep axis is empty")
        if not self.schemes:
            raise ConfigError("schemes: empty scheme list")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ConfigError(f"schemes: unknown {bad}; expected a subset of {list(SCHEMES)}")
        if len(set(self.schemes)) != len(self.schemes):
            raise ConfigError("schemes: duplicates")
        if self.num_seeds < 1:
            raise ConfigError("num_seeds must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if len(self.antennas) != self.num_rrhs:
            raise ConfigError("antennas: length must equal num_rrhs")
        if self.axis == "num_ues" and any(int(v) != v or v < 1 for v in self.values):
            raise ConfigError("values: UE counts must be positive integers")

    @property
    def seed_list(self) -> tuple:
        return tuple(self.seeds) if self.seeds is not None else tuple(range(self.num_seeds))

    def points(self) -> list:
        out = []
        for v in self.values:
            if self.axis == "power_dbm":
                out.append(SweepPoint(self.num_rrhs, self.num_ues, self.antennas, float(v),
                                      self.fronthaul_capacity))
            else:
                out.append(SweepPoint(self.num_rrhs, int(v), self.antennas, self.power_dbm,
                                      self.fronthaul_capacity))
        return out

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "system": {
                "num_rrhs": self.num_rrhs,
                "num_ues": self.num_ues,
                "antennas": list(self.antennas),
                "fronthaul_capacity": self.fronthaul_capacity,
                "power_dbm": self.power_dbm,
            },
            "axis": {"name": self.axis, "values": list(self.values)},
            "schemes": list(self.schemes),
            "num_seeds": self.num_seeds,
            "seeds": None if self.seeds is None else list(self.seeds),
            "options": {"epsilon": self.options.epsilon, "max_iters": self.options.max_iters,
                        "init_seed": self.options.init_seed,
                        "record_timing": self.options.record_timing},
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        try:
            system = d.get("system", {})
            num_rrhs = int(system.get("num_rrhs", 4))
            antennas = system.get("antennas", 1)
            if isinstance(antennas, int):
                antennas = [antennas] * num_rrhs
            axis = d.get("axis", {"name": "power_dbm", "values": [23.0, 33.0, 43.0]})
            opts = d.get("options", {})
            known = {k: opts[k] for k in ("epsilon", "max_iters", "init_seed", "record_timing") if k in opts}
            seeds = d.get("seeds")
            return cls(
                scenario=ScenarioSpec.from_dict(d.get("scenario", {})),
                num_rrhs=num_rrhs,
                num_ues=int(system.get("num_ues", 8)),
                antennas=tuple(int(a) for a in antennas),
                fronthaul_capacity=float(system.get("fronthaul_capacity", 10.0)),
                power_dbm=float(system.get("power_dbm", 43.0)),
                axis=str(axis["name"]),
                values=tuple(float(v) for v in axis["values"]),
                schemes=tuple(d.get("schemes", SCHEMES)),
                num_seeds=int(d.get("num_seeds", 50)),
                seeds=None if seeds is None else tuple(int(s) for s in seeds),
                options=AlgorithmOptions(**known),
                workers=int(d.get("workers", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid sweep spec: {exc}") from exc


def instance(seed: int, point: SweepPoint, scenario: ScenarioSpec = ScenarioSpec()):
    """Configuration and channel draw for one seed at one sweep point."""
    spec = replace(scenario, seed=int(seed))
    cfg = make_config(point.num_rrhs, point.num_ues, list(point.antennas), point.fronthaul,
                      point.power_dbm, spec)
    validate_config(cfg)
    _, chan = generate(spec, cfg)
    return cfg, chan


def run_instance(seed: int, scheme: str, point: SweepPoint, scenario: ScenarioSpec = ScenarioSpec(),
                 options: AlgorithmOptions = AlgorithmOptions(), keep_solution: bool = False) -> dict:
    """Solve one (seed, scheme, point); solver failures are recorded in the row."""
    row = {
        "seed": int(seed), "scheme": scheme, "N_R": point.num_rrhs, "N_U": point.num_ues,
        "n_R": point.total_antennas, "P_dBm": float(point.power_dbm), "C": float(point.fronthaul),
        "r_min_bits": math.nan, "iterations": 0, "converged": False, "wall_s": 0.0, "error": "",
    }
    cfg, chan = instance(seed, point, scenario)
    struct = design_sets(scheme, chan, cfg.num_ues, seed)
    try:
        vars, report, trace = run_algorithm1(chan, struct, cfg, options)
    except AlgorithmError as exc:
        report = evaluate(exc.last_iterate, chan, struct, cfg)
        row.update(r_min_bits=report.r_min, iterations=exc.trace.iterations,
                   wall_s=float(sum(exc.trace.wall_s)), error=f"solver: {exc}")
        return row
    row.update(r_min_bits=report.r_min, iterations=trace.iterations, converged=trace.converged,
               wall_s=float(sum(trace.wall_s)))
    if report.violations:
        row["error"] = "infeasible: " + "; ".join(report.violations)
    if keep_solution:
        row["_solution"] = (struct, vars, report, trace)
    return row


def _task(args):
    seed, scheme, point, scenario, options = args
    try:
        return run_instance(seed, scheme, point, scenario, options)
    except Exception as exc:  # a crashing row must not take down the sweep
        log.exception("row failed")
        return {"seed": seed, "scheme": scheme, "N_R": point.num_rrhs, "N_U": point.num_ues,
                "n_R": point.total_antennas, "P_dBm": point.power_dbm, "C": point.fronthaul,
                "r_min_bits": math.nan, "iterations": 0, "converged": False, "wall_s": 0.0,
                "error": f"{type(exc).__name__}: {exc}"}


def _axis_value(row: dict, axis: str):
    return row["P_dBm"] if axis == "power_dbm" else row["N_U"]


def row_key(row: dict, axis: str):
    return (row["seed"], SCHEMES.index(row["scheme"]), _axis_value(row, axis))


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list

    @property
    def failed(self) -> int:
        return sum(1 for r in self.rows if r["error"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in COLUMNS])
        return buf.getvalue()

    def summary(self) -> dict:
        return summarize(self.rows, self.spec.axis, self.spec.schemes)


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    return obj


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return v


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        return None, None
    se = float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return float(np.mean(x)), se


def summarize(rows, axis: str, schemes) -> dict:
    """Per-point means and standard errors plus paired scheme gaps."""
    values = sorted({_axis_value(r, axis) for r in rows})
    ok = [r for r in rows if not r["error"]]
    points = []
    for v in values:
        per_scheme = {}
        for s in schemes:
            x = [r["r_min_bits"] for r in ok if r["scheme"] == s and _axis_value(r, axis) == v]
            n_fail = sum(1 for r in rows if r["error"] and r["scheme"] == s and _axis_value(r, axis) == v)
            mean, se = _mean_se(x)
            per_scheme[s] = {"mean": mean, "stderr": se, "count": len(x), "failed": n_fail}
        gaps = {}
        ordered = [s for s in reversed(SCHEMES) if s in schemes]
        pairs = list(zip(ordered, ordered[1:]))
        if "rsma-hc" in schemes and "rsma-sc" in schemes:
            pairs.append(("rsma-hc", "rsma-sc"))
        for a, b in dict.fromkeys(pairs):
            ra = {r["seed"]: r["r_min_bits"] for r in ok if r["scheme"] == a and _axis_value(r, axis) == v}
            rb = {r["seed"]: r["r_min_bits"] for r in ok if r["scheme"] == b and _axis_value(r, axis) == v}
            common = sorted(set(ra) & set(rb))
            mean, se = _mean_se([ra[s] - rb[s] for s in common])
            gaps[f"{a} - {b}"] = {"mean": mean, "stderr": se, "count": len(common)}
        points.append({"value": v, "schemes": per_scheme, "paired_gaps": gaps})
    return {"axis": axis, "rows": len(rows), "failed": len(rows) - len(ok), "points": points}


def run_sweep(spec: SweepSpec, progress=None) -> SweepResult:
    """Run every (seed, scheme, point); rows come back in canonical order."""
    tasks = [(seed, scheme, point, spec.scenario, spec.options)
             for seed in spec.seed_list for scheme in spec.schemes for point in spec.points()]
    rows = []
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            for row in pool.map(_task, tasks):
                rows.append(row)
                if progress:
                    progress(row)
    else:
        for t in tasks:
            row = _task(t)
            rows.append(row)
            if progress:
                progress(row)
    rows.sort(key=lambda r: row_key(r, spec.axis))
    return SweepResult(spec, rows)


def write_outputs(result: SweepResult, csv_path, summary_path) -> None:
    with open(csv_path, "w", newline="") as f:
        f.write(result.to_csv())
    with open(summary_path, "w") as f:
        json.dump(_json_safe(result.summary()), f, indent=2, sort_keys=True)
        f.write("\n")
