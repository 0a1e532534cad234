"""Reproduce the four success-rate tables and compare against the published values.

    python3 scripts/reproduce_tables.py --scale desk --out results/tables
"""

import argparse
import json
import time
from pathlib import Path

from jumpcbo import harness


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("tables", nargs="*", default=list(harness.TABLE_IDS))
    p.add_argument("--scale", choices=("full", "desk"), default="full")
    p.add_argument("--sqrt2", choices=("on", "off"), default="on")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=harness.default_workers())
    p.add_argument("--tolerance", type=float, default=harness.DEFAULT_TOLERANCE)
    p.add_argument("--out", default="results/tables")
    args = p.parse_args()

    out = Path(args.out)
    kw = {} if args.seed is None else {"master_seed": args.seed}
    for tid in args.tables:
        spec = harness.table_spec(tid, scale=args.scale, sqrt2=args.sqrt2 == "on", **kw)
        t0 = time.perf_counter()
        report = harness.run_experiment(spec, workers=args.workers)
        print(f"== {tid} ({time.perf_counter() - t0:.0f}s)")
        print(report.format_table())
        cmp = harness.compare_table(report, harness.reference_table(tid), args.tolerance)
        print(cmp.summary())
        report.write(out, tid, force=True)
        (out / f"{tid}_comparison.json").write_text(json.dumps(cmp.to_dict(), indent=2) + "\n")


if __name__ == "__main__":
    main()
