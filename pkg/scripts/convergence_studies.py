"""Mean-field, Euler-refinement and pinned-decay studies on the reduced validation configs."""

import argparse

from jumpcbo import diagnostics, validation


def meanfield(reps):
    study = diagnostics.meanfield_gap_study(validation.meanfield_config(), [25, 50, 100, 200, 800], reps)
    print("     N   mean W2  median W2")
    for row in study.rows():
        print(f"{row['n_particles']:6d}  {row['mean_gap']:.4f}  {row['median_gap']:.4f}")
    print("decreasing median pairs: %d/%d" % study.decreasing_pairs)


def euler(paths):
    for name, cfg in zip(("jump_cbo", "pure drift"), validation.euler_configs()):
        res = diagnostics.euler_refinement_study(cfg, validation.EULER_LEVELS, paths)
        print(f"-- {name} (reference h={res.reference_step:g})")
        for row in res.rows():
            print(f"h={row['h']:<6g} ms_error={row['ms_error']:.4e}")
        print("rms ratios per halving:", " ".join(f"{r:.3f}" for r in res.rms_ratios))


def decay(n_paths):
    for case, params in validation.DECAY_CASES.items():
        for d in (1, 20):
            res = diagnostics.pinned_decay(validation.pinned_config(d, *params, n_paths=n_paths))
            print(f"{case:8s} d={d:2d} predicted {res.predicted_rate:+.4f} fitted {res.fitted_rate:+.4f}")


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("study", choices=("meanfield", "euler", "decay", "all"), nargs="?", default="all")
    p.add_argument("--reps", type=int, default=20, help="paired repetitions for the mean-field study")
    p.add_argument("--paths", type=int, default=20, help="coupled paths per Euler level")
    p.add_argument("--decay-paths", type=int, default=10_000)
    args = p.parse_args()
    if args.study in ("meanfield", "all"):
        meanfield(args.reps)
    if args.study in ("euler", "all"):
        euler(args.paths)
    if args.study in ("decay", "all"):
        decay(args.decay_paths)


if __name__ == "__main__":
    main()
