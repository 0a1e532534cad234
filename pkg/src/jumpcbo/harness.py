"""Multi-run experiments: success rates per (variant, N) cell, table presets, persistence."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import objective as objective_mod
from .config import ConfigError, run_config_from_dict, variant_from_spec
from .consensus import NonFiniteStateError
from .dynamics import ModelVariant, RunConfig, integrate
from .schedules import Constant, ScheduleSet, preset

DEFAULT_TOLERANCE = 15.0
TABLE_GRID = (20, 50, 80, 100)
DESK_GRID = (20, 50)
DESK_REPETITIONS = 25
TABLE_IDS = ("table1", "table2", "table3", "table4")
TABLE_COLUMNS = ("anisotropic_cbo", "cbo_common_wiener", "jump_cbo", "jump_cbo_common_poisson")


@dataclass
class ExperimentSpec:
    """Grid of cells (variant x particle count), each run ``repetitions`` times.

    ``variant_schedules`` maps a variant tag to the schedule set it uses
    instead of ``run_config.schedules``.
    """

    run_config: RunConfig
    variants: list
    repetitions: int = 100
    success_radius: float = 0.25
    n_particles_grid: list = field(default_factory=lambda: list(TABLE_GRID))
    variant_schedules: dict = field(default_factory=dict)
    name: str = "experiment"
    scale: str = "full"

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.repetitions}")
        if not self.success_radius > 0:
            raise ValueError(f"success_radius must be positive, got {self.success_radius}")
        if not self.variants:
            raise ValueError("experiment needs at least one variant")
        if not self.n_particles_grid or min(self.n_particles_grid) < 1:
            raise ValueError("n_particles_grid needs positive particle counts")
        if self.run_config.objective.known_minimizer is None:
            raise ValueError("success rates need an objective with a known minimizer")
        self.variants = [variant_from_spec(v) if not isinstance(v, ModelVariant) else v for v in self.variants]
        self.n_particles_grid = [int(n) for n in self.n_particles_grid]

    def cell_config(self, variant: ModelVariant, n_particles: int) -> RunConfig:
        cfg = self.run_config
        return cfg.replace(
            variant=variant,
            n_particles=n_particles,
            schedules=self.variant_schedules.get(variant.tag, cfg.schedules),
            snapshot_stride=max(cfg.n_steps, 1),
        )

    @property
    def n_cells(self) -> int:
        return len(self.variants) * len(self.n_particles_grid)

    @property
    def n_runs(self) -> int:
        return self.n_cells * self.repetitions

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "scale": self.scale,
            "run": self.run_config.to_dict(),
            "variants": [v.to_dict() for v in self.variants],
            "repetitions": self.repetitions,
            "success_radius": self.success_radius,
            "n_particles_grid": list(self.n_particles_grid),
            "variant_schedules": {k: s.to_dict() for k, s in self.variant_schedules.items()},
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "ExperimentSpec":
        spec = dict(spec)
        try:
            run = run_config_from_dict(spec.pop("run"))
        except KeyError:
            raise ConfigError("experiment needs a [run] table") from None
        overrides = {k: ScheduleSet.from_dict(v) for k, v in spec.pop("variant_schedules", {}).items()}
        known = {"name", "scale", "variants", "repetitions", "success_radius", "n_particles_grid"}
        unknown = set(spec) - known
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        variants = spec.pop("variants", [run.variant.to_dict()])
        try:
            return cls(run_config=run, variants=variants, variant_schedules=overrides, **spec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid experiment: {exc}") from None


@dataclass
class RunResult:
    variant: str
    n_particles: int
    run_index: int
    success: bool
    terminal_f: float
    dist_to_min: float
    best_f: float
    n_evaluations: int
    wall_ms: float
    anomaly: str = ""


@dataclass
class CellSummary:
    variant: str
    label: str
    n_particles: int
    repetitions: int
    successes: int
    success_rate: float
    mean_terminal_f: float
    median_terminal_f: float
    anomalies: int
    mean_runtime: float

    @property
    def percent(self) -> float:
        return 100.0 * self.success_rate


_TIMING_FIELDS = ("mean_runtime",)


@dataclass
class ExperimentReport:
    spec: dict
    master_seed: int
    cells: list
    runs: list
    total_wall_time: float = 0.0

    def cell(self, variant: str, n_particles: int) -> CellSummary:
        """Look up a cell by variant tag or table label."""
        for c in self.cells:
            if (variant in (c.variant, c.label)) and c.n_particles == n_particles:
                return c
        raise KeyError((variant, n_particles))

    def rates(self) -> dict:
        return {(c.label, c.n_particles): c.percent for c in self.cells}

    def to_dict(self, include_timing: bool = True) -> dict:
        cells = []
        for c in self.cells:
            d = dict(vars(c))
            for k in _TIMING_FIELDS:
                d.pop(k)
            cells.append(d)
        out = {
            "spec": self.spec,
            "master_seed": self.master_seed,
            "scale": self.spec.get("scale", "full"),
            "tolerance_note": (
                f"Default table tolerance is {DEFAULT_TOLERANCE:g} points; with 100 runs the "
                "binomial standard error is at most 5 points, so the tolerance exceeds 3 standard errors."
            ),
            "cells": cells,
        }
        if include_timing:
            out["timing"] = {
                "total_wall_time_s": self.total_wall_time,
                "mean_runtime_s": {f"{c.variant}/{c.n_particles}": c.mean_runtime for c in self.cells},
            }
        return out

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True, default=_json_default)

    def write(self, out_dir: str | Path, stem: str = "report", force: bool = False) -> tuple[Path, Path]:
        """Write ``<stem>.json`` (summary with embedded spec) and ``<stem>_runs.csv``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        js, cs = out / f"{stem}.json", out / f"{stem}_runs.csv"
        if not force:
            for p in (js, cs):
                if p.exists():
                    raise FileExistsError(f"{p} exists; pass force=True (--force) to overwrite")
        js.write_text(self.to_json() + "\n")
        write_runs_csv(self.runs, cs)
        return js, cs

    def format_table(self) -> str:
        grid = sorted({c.n_particles for c in self.cells})
        labels = list(dict.fromkeys(c.label for c in self.cells))
        lines = ["N".rjust(5) + "".join(l.rjust(14) for l in labels)]
        for n in grid:
            row = str(n).rjust(5)
            for l in labels:
                c = self.cell(l, n)
                row += f"{c.successes}/{c.repetitions}".rjust(14)
            lines.append(row)
        return "\n".join(lines)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


RUN_CSV_FIELDS = ("variant", "n_particles", "run_index", "success", "terminal_f", "dist_to_min",
                  "best_f", "n_evaluations", "wall_ms", "anomaly")


def write_runs_csv(runs: Sequence[RunResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUN_CSV_FIELDS)
        for r in runs:
            w.writerow([getattr(r, k) for k in RUN_CSV_FIELDS])


# --- execution ----------------------------------------------------------------

def run_single(config: RunConfig, run_index: int, success_radius: float) -> RunResult:
    """One run; a non-finite state is recorded as an unsuccessful anomaly."""
    f = config.objective
    started = time.perf_counter()
    try:
        traj = integrate(config, run_index, keep_snapshots=False)
    except NonFiniteStateError as exc:
        return RunResult(config.variant.tag, config.n_particles, run_index, False, math.nan, math.nan,
                         math.nan, 0, 1000.0 * (time.perf_counter() - started), anomaly=str(exc))
    dist = float(np.linalg.norm(traj.final_consensus - f.known_minimizer))
    return RunResult(
        variant=config.variant.tag,
        n_particles=config.n_particles,
        run_index=run_index,
        success=bool(dist <= success_radius),
        terminal_f=float(f(traj.final_consensus)),
        dist_to_min=dist,
        best_f=traj.best_value,
        n_evaluations=traj.n_evaluations,
        wall_ms=1000.0 * traj.wall_time,
    )


def _worker(payload):
    # configs travel as dicts: objectives hold closures, which do not pickle
    cfg_dict, runs, radius = payload
    cfg = run_config_from_dict(cfg_dict)
    return [run_single(cfg, r, radius) for r in runs]


def default_workers() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def run_experiment(spec: ExperimentSpec, workers: int = 1, progress=None) -> ExperimentReport:
    """Run every (variant, N) cell.

    Run ``r`` of every cell uses the run seed derived from ``(master_seed, r)``,
    so cells are paired.  Results are folded in (variant, N, run index) order
    and do not depend on ``workers``.
    """
    started = time.perf_counter()
    cells = [(v, n) for v in spec.variants for n in spec.n_particles_grid]
    reps = list(range(spec.repetitions))
    results: dict = {}
    if workers <= 1:
        for v, n in cells:
            cfg = spec.cell_config(v, n)
            results[(v.tag, n)] = [run_single(cfg, r, spec.success_radius) for r in reps]
            if progress:
                progress(v, n, results[(v.tag, n)])
    else:
        batch = max(1, math.ceil(spec.repetitions / (2 * workers)))
        jobs = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for v, n in cells:
                cfg = spec.cell_config(v, n).to_dict()
                for i in range(0, len(reps), batch):
                    jobs.append(((v.tag, n), pool.submit(_worker, (cfg, reps[i:i + batch], spec.success_radius))))
            for key, fut in jobs:
                results.setdefault(key, []).extend(fut.result())
        if progress:
            for v, n in cells:
                progress(v, n, results[(v.tag, n)])
    summaries, runs = [], []
    for v, n in cells:
        rs = sorted(results[(v.tag, n)], key=lambda r: r.run_index)
        runs.extend(rs)
        summaries.append(_summarize(v, n, rs))
    return ExperimentReport(spec.to_dict(), spec.run_config.master_seed, summaries, runs,
                            time.perf_counter() - started)


def _summarize(v: ModelVariant, n: int, rs: list) -> CellSummary:
    ok = sum(r.success for r in rs)
    tf = np.array([r.terminal_f for r in rs])
    finite = tf[np.isfinite(tf)]
    return CellSummary(
        variant=v.tag,
        label=v.label,
        n_particles=n,
        repetitions=len(rs),
        successes=int(ok),
        success_rate=ok / len(rs),
        mean_terminal_f=float(finite.mean()) if finite.size else math.nan,
        median_terminal_f=float(np.median(finite)) if finite.size else math.nan,
        anomalies=sum(bool(r.anomaly) for r in rs),
        mean_runtime=float(np.mean([r.wall_ms for r in rs])) / 1000.0,
    )


# --- comparison against published tables ---------------------------------------

@dataclass
class CellVerdict:
    label: str
    n_particles: int
    observed: float
    expected: float
    passed: bool


@dataclass
class TableComparison:
    verdicts: list
    tolerance: float

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def summary(self) -> str:
        lines = [f"tolerance +/-{self.tolerance:g} points"]
        for v in self.verdicts:
            mark = "ok  " if v.passed else "FAIL"
            lines.append(f"{mark} {v.label:>12} N={v.n_particles:<4} observed {v.observed:6.1f}  expected {v.expected:6.1f}")
        n_ok = sum(v.passed for v in self.verdicts)
        lines.append(f"{n_ok}/{len(self.verdicts)} cells within tolerance")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"tolerance": self.tolerance, "all_passed": self.all_passed,
                "cells": [vars(v) for v in self.verdicts]}


def compare_table(report: ExperimentReport | dict, reference: dict,
                  tolerance: float = DEFAULT_TOLERANCE) -> TableComparison:
    """Per-cell ``|observed - expected| <= tolerance`` in percentage points.

    ``report`` is an :class:`ExperimentReport` or a plain ``{(label, N): percent}``
    mapping; ``reference`` maps ``label -> {N: percent}`` or ``(label, N) -> percent``.
    Every observed cell must have a reference value.
    """
    observed = report.rates() if isinstance(report, ExperimentReport) else dict(report)
    ref = _flatten_reference(reference)
    missing = [k for k in observed if k not in ref]
    if missing:
        raise KeyError(f"no reference value for cells {missing}")
    verdicts = [CellVerdict(label, n, float(obs), float(ref[(label, n)]),
                            abs(obs - ref[(label, n)]) <= tolerance)
                for (label, n), obs in observed.items()]
    return TableComparison(verdicts, tolerance)


def _flatten_reference(reference: dict) -> dict:
    flat = {}
    for k, v in reference.items():
        if isinstance(k, tuple):
            flat[k] = float(v)
        else:
            for n, rate in v.items():
                flat[(k, int(n))] = float(rate)
    return flat


def load_reference_tables() -> dict:
    text = resources.files("jumpcbo").joinpath("data/reference_tables.json").read_text()
    return json.loads(text)


def reference_table(table_id: str) -> dict:
    """``label -> {N: percent}`` for one published table."""
    data = load_reference_tables()
    if table_id not in data["tables"]:
        raise ValueError(f"unknown table {table_id!r}; choose from {TABLE_IDS}")
    grid = data["n_particles"]
    return {label: dict(zip(grid, rates)) for label, rates in data["tables"][table_id]["rates"].items()}


def table_spec(table_id: str, scale: str = "full", sqrt2: bool = True, master_seed: int = 0,
               repetitions: Optional[int] = None) -> ExperimentSpec:
    """Experiment reproducing one published success-rate table.

    ``scale="desk"`` shrinks to 25 repetitions and N in {20, 50}.
    """
    if table_id not in TABLE_IDS:
        raise ValueError(f"unknown table {table_id!r}; choose from {TABLE_IDS}")
    if scale not in ("full", "desk"):
        raise ValueError(f"scale must be 'full' or 'desk', got {scale!r}")
    alpha = 20 if table_id in ("table1", "table3") else 30
    variants = [ModelVariant(tag, sqrt2_in_diffusion=sqrt2) for tag in TABLE_COLUMNS]
    overrides = {}
    if table_id in ("table1", "table2"):
        f = objective_mod.rastrigin(20)
        schedules = preset(f"rastrigin-exp1-a{alpha}")
        horizon, box = 100.0, (-6.0, 6.0)
    else:
        f = objective_mod.rosenbrock(5)
        schedules = preset(f"rosenbrock-exp2-a{alpha}")
        nojump = preset(f"rosenbrock-exp2-a{alpha}-nojump")
        overrides = {v.tag: nojump for v in variants if not v.has_jumps}
        horizon, box = 120.0, (-1.0, 3.0)
    base = RunConfig(ModelVariant("jump_cbo", sqrt2_in_diffusion=sqrt2), schedules, f,
                     n_particles=TABLE_GRID[0], horizon=horizon, step=0.01, init_box=box,
                     master_seed=master_seed)
    reps = DESK_REPETITIONS if scale == "desk" else 100
    return ExperimentSpec(
        run_config=base,
        variants=variants,
        repetitions=repetitions or reps,
        success_radius=0.25,
        n_particles_grid=list(DESK_GRID if scale == "desk" else TABLE_GRID),
        variant_schedules=overrides,
        name=table_id,
        scale=scale,
    )


# --- sweeps -------------------------------------------------------------------

_SCHEDULE_PARAMS = {"beta": "beta", "sigma": "sigma", "gamma": "gamma", "lambda": "lambda_", "lambda_": "lambda_"}
_RUN_PARAMS = ("step", "horizon", "master_seed")
_SPEC_PARAMS = ("success_radius", "repetitions")
SWEEP_PARAMETERS = ("alpha",) + tuple(_SCHEDULE_PARAMS) + _RUN_PARAMS + _SPEC_PARAMS


def _with_parameter(spec: ExperimentSpec, parameter: str, value) -> ExperimentSpec:
    def on_schedules(s: ScheduleSet) -> ScheduleSet:
        if parameter == "alpha":
            return s.replace(alpha=float(value))
        return s.replace(**{_SCHEDULE_PARAMS[parameter]: Constant(float(value))})

    kw = dict(vars(spec))
    if parameter == "alpha" or parameter in _SCHEDULE_PARAMS:
        kw["run_config"] = spec.run_config.replace(schedules=on_schedules(spec.run_config.schedules))
        kw["variant_schedules"] = {k: on_schedules(s) for k, s in spec.variant_schedules.items()}
    elif parameter in _RUN_PARAMS:
        kw["run_config"] = spec.run_config.replace(**{parameter: type(getattr(spec.run_config, parameter))(value)})
    else:
        kw[parameter] = value
    kw["name"] = f"{spec.name}[{parameter}={value}]"
    return ExperimentSpec(**kw)


def sweep(spec: ExperimentSpec, parameter: str, values: Sequence, workers: int = 1) -> list:
    """One report per value of ``parameter``; all reports share the master seed.

    Schedule parameters (beta, sigma, gamma, lambda) are set to constants on
    the base schedules and on every per-variant override.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}")
    return [run_experiment(_with_parameter(spec, parameter, v), workers=workers) for v in values]
