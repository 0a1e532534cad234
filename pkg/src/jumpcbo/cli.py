"""Command-line entry point: ``jumpcbo {run,reproduce,study,validate,presets}``.

Exit codes: 0 success, 1 acceptance or validation failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, diagnostics, harness, validation
from .config import ConfigError, load_document, run_config_from_dict
from .dynamics import VARIANT_TAGS, initial_ensemble, integrate
from .schedules import PRESETS, preset
from .stochastic import derive_seed

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
OUT_ENV = "JUMPCBO_OUT"

log = logging.getLogger("jumpcbo")


class UsageError(Exception):
    pass


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or "results")


def _sqrt2(args) -> bool | None:
    return None if args.sqrt2 is None else args.sqrt2 == "on"


def _write_json(path: Path, payload: dict, force: bool) -> None:
    if path.exists() and not force:
        raise UsageError(f"{path} exists; use --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=harness._json_default) + "\n")


def _apply_overrides(doc: dict, args) -> dict:
    """Flags win over config-file fields."""
    run = dict(doc.get("run", {}))
    if args.seed is not None:
        run["master_seed"] = args.seed
    if _sqrt2(args) is not None:
        run["sqrt2_in_diffusion"] = _sqrt2(args)
        exp = doc.get("experiment")
        if exp and "variants" in exp:
            exp = dict(exp)
            exp["variants"] = [
                {**({"tag": v} if isinstance(v, str) else v), "sqrt2_in_diffusion": _sqrt2(args)}
                for v in exp["variants"]
            ]
            doc = {**doc, "experiment": exp}
    return {**doc, "run": run}


# --- subcommands ----------------------------------------------------------------

def cmd_run(args) -> int:
    if not args.config:
        raise UsageError("run needs --config")
    doc = _apply_overrides(load_document(args.config), args)
    out = _out_dir(args)
    if "experiment" in doc:
        spec = harness.ExperimentSpec.from_dict({**doc["experiment"], "run": doc["run"]})
        if args.scale == "desk":
            spec.repetitions = harness.DESK_REPETITIONS
            spec.n_particles_grid = list(harness.DESK_GRID)
            spec.scale = "desk"
        if args.dry_run:
            print(json.dumps(spec.to_dict(), indent=2, default=harness._json_default))
            print(f"planned: {spec.n_cells} cells, {spec.n_runs} runs")
            return EXIT_OK
        _check_free(out, spec.name, args.force)
        report = harness.run_experiment(spec, workers=args.workers, progress=_progress)
        js, _ = report.write(out, stem=spec.name, force=args.force)
        print(report.format_table())
        print(f"wrote {js}")
        return EXIT_OK
    cfg = run_config_from_dict(doc["run"])
    if args.dry_run:
        print(json.dumps(cfg.to_dict(), indent=2, default=harness._json_default))
        print("planned: 1 run")
        return EXIT_OK
    traj = integrate(cfg, 0, keep_snapshots=False)
    f = cfg.objective
    payload = {
        "config": cfg.to_dict(),
        "final_consensus": traj.final_consensus,
        "terminal_f": float(f(traj.final_consensus)),
        "best_position": traj.best_position,
        "best_value": traj.best_value,
        "n_evaluations": traj.n_evaluations,
        "timing": {"wall_time_s": traj.wall_time},
    }
    if f.known_minimizer is not None:
        payload["dist_to_min"] = float(np.linalg.norm(traj.final_consensus - f.known_minimizer))
    _write_json(out / "run.json", payload, args.force)
    print(f"terminal f(consensus) = {payload['terminal_f']:.6g}; wrote {out / 'run.json'}")
    return EXIT_OK


def _check_free(out: Path, stem: str, force: bool) -> None:
    if force:
        return
    for p in (out / f"{stem}.json", out / f"{stem}_runs.csv"):
        if p.exists():
            raise UsageError(f"{p} exists; use --force to overwrite")


def _progress(variant, n, results) -> None:
    ok = sum(r.success for r in results)
    log.info("%-12s N=%-4d %3d/%d successes", variant.label, n, ok, len(results))


def cmd_reproduce(args) -> int:
    sqrt2 = _sqrt2(args)
    spec = harness.table_spec(args.table, scale=args.scale, sqrt2=True if sqrt2 is None else sqrt2,
                              master_seed=args.seed or 0)
    if args.dry_run:
        print(json.dumps(spec.to_dict(), indent=2, default=harness._json_default))
        print(f"planned: {spec.n_cells} cells, {spec.n_runs} runs")
        return EXIT_OK
    out = _out_dir(args)
    _check_free(out, args.table, args.force)
    cmp_path = out / f"{args.table}_comparison.json"
    if cmp_path.exists() and not args.force:
        raise UsageError(f"{cmp_path} exists; use --force to overwrite")
    report = harness.run_experiment(spec, workers=args.workers, progress=_progress)
    report.write(out, stem=args.table, force=args.force)
    comparison = harness.compare_table(report, harness.reference_table(args.table), args.tolerance)
    _write_json(cmp_path, {"table": args.table, "scale": args.scale, **comparison.to_dict()}, True)
    label = " (reduced scale)" if args.scale == "desk" else ""
    print(f"{args.table}{label}: successes per cell")
    print(report.format_table())
    print(comparison.summary())
    return EXIT_OK if comparison.all_passed else EXIT_FAIL


_STUDIES = ("meanfield", "euler", "alpha", "decay", "conditions")


def cmd_study(args) -> int:
    doc = _apply_overrides(load_document(args.config), args) if args.config else {}
    params = dict(doc.get("study", {}))
    out = _out_dir(args)
    kind = args.kind
    if kind == "meanfield":
        base = run_config_from_dict(doc["run"]) if "run" in doc else validation.meanfield_config()
        levels = params.get("n_levels", [25, 50, 100, 200, 800])
        reps = int(params.get("paired_runs", 20))
        if args.dry_run:
            return _plan(base, f"{len(levels)} levels x {reps} repetitions")
        st = diagnostics.meanfield_gap_study(base, levels, reps)
        dec, total = st.decreasing_pairs
        payload = {"rows": st.rows(), "decreasing_pairs": dec, "pairs": total}
    elif kind == "euler":
        base = run_config_from_dict(doc["run"]) if "run" in doc else validation.euler_configs()[0]
        levels = params.get("h_levels", list(validation.EULER_LEVELS))
        paths = int(params.get("paths", 20))
        if args.dry_run:
            return _plan(base, f"{len(levels)} levels x {paths} paths")
        st = diagnostics.euler_refinement_study(base, levels, paths,
                                                reference_factor=int(params.get("reference_factor", 16)))
        payload = {"rows": st.rows(), "rms_ratios": st.rms_ratios.tolist(), "reference_step": st.reference_step}
    elif kind == "alpha":
        base = run_config_from_dict(doc["run"]) if "run" in doc else validation.meanfield_config()
        alphas = params.get("alphas", [1.0, 10.0, 100.0])
        reps = int(params.get("repetitions", 20))
        if args.dry_run:
            return _plan(base, f"{len(alphas)} alphas x {reps} repetitions")
        payload = {"rows": [{"alpha": a, "median_gap": g} for a, g in diagnostics.alpha_sweep(base, alphas, reps)]}
    elif kind == "decay":
        base = run_config_from_dict(doc["run"]) if "run" in doc else validation.pinned_config(
            1, *validation.DECAY_CASES["negative"])
        if args.dry_run:
            return _plan(base, "1 pinned run")
        res = diagnostics.pinned_decay(base)
        payload = {"fitted_rate": res.fitted_rate, "predicted_rate": res.predicted_rate,
                   "times": res.times, "mean_square": res.mean_square}
    else:
        if "run" not in doc:
            raise UsageError("the conditions study needs --config with a [run] table and [study] K1, K2, K3")
        base = run_config_from_dict(doc["run"])
        if args.dry_run:
            return _plan(base, "closed-form evaluation")
        x0 = initial_ensemble(base, derive_seed(base.master_seed, 0))
        shift, scaled = diagnostics.ensemble_m(base.objective(x0), base.schedules.alpha)
        m0 = float(np.exp(-base.schedules.alpha * shift) * scaled)
        rep = diagnostics.consensus_conditions(base, diagnostics.ensemble_variance(x0), m0,
                                               params.get("K1", 2.0), params.get("K2", 2.0), params.get("K3", 1.0))
        payload = {"chi_min": rep.chi_min, "eta": rep.eta, "condition_met": rep.condition_met}
    payload = {"study": kind, "config": base.to_dict(), "params": params, **payload}
    path = out / f"study_{kind}.json"
    _write_json(path, payload, args.force)
    if "rows" in payload:
        for row in payload["rows"]:
            print("  ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    print(f"wrote {path}")
    return EXIT_OK


def _plan(base, what: str) -> int:
    print(json.dumps(base.to_dict(), indent=2, default=harness._json_default))
    print(f"planned: {what}")
    return EXIT_OK


def cmd_validate(args) -> int:
    results = validation.run_checks(args.level, report=print)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_presets(args) -> int:
    print("schedule presets:")
    for name in sorted(PRESETS):
        print(f"  {name}: {json.dumps(preset(name).to_dict())}")
    print("variants: " + ", ".join(VARIANT_TAGS))
    print("tables: " + ", ".join(harness.TABLE_IDS))
    return EXIT_OK


# --- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config document (schema_version = 1)")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--workers", type=int, default=harness.default_workers(), help="worker processes")
    common.add_argument("--scale", choices=("full", "desk"), default="full",
                        help="desk: 25 repetitions and N in {20, 50}")
    common.add_argument("--force", action="store_true", help="overwrite existing reports")
    common.add_argument("--dry-run", action="store_true", help="print the resolved config and plan, run nothing")
    common.add_argument("--sqrt2", choices=("on", "off"), help="sqrt(2) factor on the diffusion term")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="jumpcbo", description="Jump-diffusion consensus-based optimization.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run a config (single run or experiment grid)")
    r.set_defaults(func=cmd_run)
    rep = sub.add_parser("reproduce", parents=[common], help="reproduce a published success-rate table")
    rep.add_argument("table", choices=harness.TABLE_IDS)
    rep.add_argument("--tolerance", type=float, default=harness.DEFAULT_TOLERANCE,
                     help="allowed deviation in percentage points")
    rep.set_defaults(func=cmd_reproduce)
    st = sub.add_parser("study", parents=[common], help="convergence studies")
    st.add_argument("kind", choices=_STUDIES)
    st.set_defaults(func=cmd_study)
    v = sub.add_parser("validate", parents=[common], help="run the invariant suite")
    v.add_argument("level", choices=("fast", "full"), nargs="?", default="fast")
    v.set_defaults(func=cmd_validate)
    pr = sub.add_parser("presets", parents=[common], help="list presets, variants and tables")
    pr.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
