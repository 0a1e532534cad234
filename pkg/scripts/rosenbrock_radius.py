"""Terminal distance to the Rosenbrock minimizer, per variant, at several success radii.

Shows where the jump models end up when they miss the 0.25 ball.
"""

import argparse

import numpy as np

from jumpcbo import harness


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--table", choices=("table3", "table4"), default="table3")
    p.add_argument("--n", type=int, default=80)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--sqrt2", choices=("on", "off"), default="on")
    args = p.parse_args()

    spec = harness.table_spec(args.table, repetitions=args.reps, sqrt2=args.sqrt2 == "on")
    spec.n_particles_grid = [args.n]
    report = harness.run_experiment(spec, workers=harness.default_workers())
    radii = (0.25, 0.5, 1.0, 2.0)
    print("variant        " + "  ".join(f"r<={r:<4}" for r in radii) + "  median dist  median f")
    for v in spec.variants:
        runs = [r for r in report.runs if r.variant in (v.tag, v.label)]
        dist = np.array([r.dist_to_min for r in runs])
        f = np.array([r.terminal_f for r in runs])
        hits = "  ".join(f"{np.sum(dist <= r):>6d}" for r in radii)
        print(f"{v.label:14s} {hits}  {np.median(dist):11.3f}  {np.median(f):.4f}")


if __name__ == "__main__":
    main()
