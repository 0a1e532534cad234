"""Self-checks run by ``jumpcbo validate``.

``fast`` covers pure-function invariants and small deterministic runs;
``full`` adds the Monte Carlo oracles.  Each check names what it guards, so a
failure points at the culprit.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import consensus, diagnostics, dynamics, harness, objective, schedules, stochastic
from .schedules import Constant, ScheduleSet


@dataclass
class CheckResult:
    name: str
    culprit: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        tail = "" if self.passed else f"  [culprit: {self.culprit}]"
        return f"{mark} {self.name} ({self.seconds:.1f}s): {self.detail}{tail}"


@dataclass
class Check:
    name: str
    culprit: str
    fn: Callable[[], str]


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise AssertionError(msg)


def _sample_ensemble(seed=7, n=40, d=3, spread=3.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-spread, spread, (n, d))


# --- fast checks ----------------------------------------------------------------

def check_shift_invariance() -> str:
    x = _sample_ensemble()
    f = objective.rastrigin(3)
    base = consensus.consensus_point(x, f, 30.0)
    c = 1e6
    shifted = consensus.consensus_from_values(x, f(x) + c, 30.0)
    err = float(np.max(np.abs(shifted - base)))
    _require(np.all(np.isfinite(shifted)) and err <= 1e-9, f"consensus moved by {err:.3g} under f -> f + {c:g}")
    return f"max deviation {err:.2e} at shift {c:g}"


def check_scale_invariance() -> str:
    x = _sample_ensemble()
    vals = objective.rastrigin(3)(x)
    a = consensus.consensus_from_values(x, vals, 30.0)
    b = consensus.consensus_from_values(x, 4.0 * vals, 7.5)
    err = float(np.max(np.abs(a - b)))
    _require(err <= 1e-12, f"(f, alpha) -> (4f, alpha/4) moved consensus by {err:.3g}")
    return f"max deviation {err:.2e}"


def check_convex_hull() -> str:
    f = objective.rastrigin(3)
    for seed in range(20):
        x = _sample_ensemble(seed)
        for alpha in (1e-3, 1.0, 30.0, 1e4):
            c = consensus.consensus_point(x, f, alpha)
            _require(np.all(c >= x.min(axis=0) - 1e-12) and np.all(c <= x.max(axis=0) + 1e-12),
                     f"consensus outside the bounding box (seed {seed}, alpha {alpha})")
            w = consensus.consensus_weights(f(x), alpha)
            _require(np.all(w >= 0) and abs(w.sum() - 1.0) < 1e-12, "weights not a probability vector")
    return "80 ensembles inside their bounding boxes"


def _small_config(tag: str, lam: float = 2.0, gamma: float = 0.5) -> dynamics.RunConfig:
    s = ScheduleSet(beta=Constant(1.0), sigma=Constant(0.7), gamma=Constant(gamma), lambda_=Constant(lam), alpha=10.0)
    return dynamics.RunConfig(dynamics.ModelVariant(tag), s, objective.rastrigin(4), 15, 2.0, 0.01,
                              init_box=(-3.0, 3.0), master_seed=11, snapshot_stride=50)


def check_jump_degeneracy() -> str:
    ref = dynamics.integrate(_small_config("anisotropic_cbo"), 3)
    out = []
    for backend in ("numba", "numpy"):
        ref_b = dynamics.integrate(_small_config("anisotropic_cbo"), 3, backend=backend)
        for tag in ("jump_cbo", "jump_cbo_common_poisson"):
            for lam, gam in ((0.0, 0.5), (2.0, 0.0)):
                traj = dynamics.integrate(_small_config(tag, lam, gam), 3, backend=backend)
                _require(np.array_equal(traj.snapshots, ref_b.snapshots),
                         f"{tag} with lambda={lam}, gamma={gam} differs from anisotropic_cbo ({backend})")
        out.append(backend)
    _require(np.array_equal(ref.snapshots, dynamics.integrate(_small_config("anisotropic_cbo"), 3).snapshots),
             "repeat run is not reproducible")
    return "lambda=0 and gamma=0 reproduce anisotropic_cbo bit for bit (" + ", ".join(out) + ")"


def check_backend_agreement() -> str:
    cfg = _small_config("jump_cbo")
    a = dynamics.integrate(cfg, 1, backend="numba").final_positions
    b = dynamics.integrate(cfg, 1, backend="numpy").final_positions
    err = float(np.max(np.abs(a - b)))
    _require(err <= 1e-8 * max(1.0, float(np.max(np.abs(b)))), f"compiled and numpy paths differ by {err:.3g}")
    return f"max deviation {err:.2e}"


def check_worker_determinism() -> str:
    spec = harness.ExperimentSpec(
        run_config=_small_config("jump_cbo"),
        variants=["anisotropic_cbo", "jump_cbo"],
        repetitions=4,
        n_particles_grid=[10, 15],
        success_radius=1.0,
    )
    one = harness.run_experiment(spec, workers=1).to_json(include_timing=False)
    two = harness.run_experiment(spec, workers=2).to_json(include_timing=False)
    _require(one == two, "report differs between 1 and 2 workers")
    return "identical reports with 1 and 2 workers"


def check_poisson_moments() -> str:
    rng = np.random.default_rng(5)
    n, lam, h = 200_000, 20.0, 0.01
    counts = np.array([stochastic.compound_poisson_batch(rng, lam, h, 1, stochastic.standard_gaussian()).shape[0]
                       for _ in range(20_000)])
    m = counts.mean()
    se = math.sqrt(lam * h / counts.size)
    _require(abs(m - lam * h) < 5 * se, f"Poisson count mean {m:.4f}, expected {lam * h}")
    _require(abs(counts.var() - lam * h) < 0.02, f"Poisson count variance {counts.var():.4f}, expected {lam * h}")
    src = stochastic.NoiseSource(3, 100, 2, h, jumps=True, intensity=lambda t: np.full(np.shape(t), lam))
    dW, S = src.draw(0, n // 100)
    se_w = h * math.sqrt(2.0 / dW.size)
    _require(abs(dW.var() - h) < 5 * se_w, f"Wiener increment variance {dW.var():.5f}, expected {h}")
    s2 = float(np.mean(S**2))
    _require(abs(s2 - lam * h) < 0.02 * lam * h * 5, f"jump-sum second moment {s2:.4f}, expected {lam * h}")
    for dist, expected in ((stochastic.standard_gaussian(), 1.0), (stochastic.uniform_symmetric(2.0), 4.0 / 3.0)):
        z = dist.sample(rng, 400_000)
        _require(abs(np.mean(z)) < 0.01 and abs(np.mean(z**2) - expected) < 0.02,
                 f"{dist.kind} moments off: mean {np.mean(z):.4f}, second {np.mean(z**2):.4f}")
    return f"count mean {m:.4f} (lambda h = {lam * h}); increment and jump moments consistent"


def check_decay_formula() -> str:
    s = ScheduleSet(beta=Constant(1.0), sigma=Constant(0.5), gamma=Constant(0.5), lambda_=Constant(1.0))
    got = dynamics.decay_exponent(s, dynamics.ModelVariant("jump_cbo"), 0.0)
    _require(abs(got - (-1.25)) < 1e-12, f"decay_exponent gave {got}, expected -1.25")
    got1 = dynamics.decay_exponent(s, dynamics.ModelVariant("jump_cbo", sqrt2_in_diffusion=False), 0.0)
    _require(abs(got1 - (-1.5)) < 1e-12, f"decay_exponent without sqrt2 gave {got1}, expected -1.5")
    return "closed-form values match"


def check_m_stabilization() -> str:
    rng = np.random.default_rng(2)
    for _ in range(50):
        v = rng.uniform(0, 5, 30)
        alpha = rng.uniform(0.1, 10)
        shift, scaled = diagnostics.ensemble_m(v, alpha)
        naive = np.mean(np.exp(-alpha * v))
        _require(abs(math.exp(-alpha * shift) * scaled - naive) <= 1e-12 * max(naive, 1e-300) + 1e-300,
                 "stabilized M differs from the naive value")
    return "stabilized M equals naive M on 50 samples"


def check_w2_triangle() -> str:
    rng = np.random.default_rng(4)
    for _ in range(50):
        a, b, c = (rng.normal(rng.normal(), 1.0, rng.integers(1, 30)) for _ in range(3))
        ab, bc, ac = (diagnostics.wasserstein2_1d(*p) for p in ((a, b), (b, c), (a, c)))
        _require(ac <= ab + bc + 1e-12, f"triangle inequality violated: {ac} > {ab} + {bc}")
    return "50 random triples"


# --- Monte Carlo oracles (full) -------------------------------------------------

DECAY_CASES = {
    # (beta, sigma, lambda, gamma) -> closed-form rate with c = sqrt(2), E Z^2 = 1
    "negative": (1.0, 0.2, 1.0, 0.2),
    "zero": (0.08, 0.2, 2.0, 0.2),
    "positive": (-0.5, 0.2, 1.0, 0.2),
}


def pinned_config(d: int, beta: float, sigma: float, lam: float, gamma: float,
                  n_paths: int = 10_000, horizon: float = 1.0) -> dynamics.RunConfig:
    s = ScheduleSet(beta=Constant(beta), sigma=Constant(sigma), gamma=Constant(gamma),
                    lambda_=Constant(lam), alpha=1.0)
    return dynamics.RunConfig(dynamics.ModelVariant("jump_cbo"), s, objective.quadratic_shifted(d),
                              n_paths, horizon, 0.01, init_box=(1.0, 2.0), master_seed=2024)


def check_decay_oracle() -> str:
    parts = []
    for label, p in DECAY_CASES.items():
        res = diagnostics.pinned_decay(pinned_config(1, *p))
        if label == "zero":
            ok = abs(res.fitted_rate - res.predicted_rate) <= 0.05
        else:
            ok = res.relative_error <= 0.05
        _require(ok, f"decay_exponent mismatch ({label}): fitted {res.fitted_rate:.4f}, "
                     f"predicted {res.predicted_rate:.4f}")
        parts.append(f"{label} {res.fitted_rate:+.3f}/{res.predicted_rate:+.3f}")
    return "; ".join(parts)


def meanfield_config() -> dynamics.RunConfig:
    s = ScheduleSet(beta=Constant(1.0), sigma=Constant(0.5), gamma=Constant(0.5), lambda_=Constant(1.0), alpha=10.0)
    return dynamics.RunConfig(dynamics.ModelVariant("jump_cbo"), s, objective.quadratic_shifted(1, [0.5]),
                              25, 1.0, 0.01, init_box=(-2.0, 2.0), master_seed=7)


def check_meanfield_trend() -> str:
    study = diagnostics.meanfield_gap_study(meanfield_config(), [25, 50, 100, 200, 800], 20)
    dec, total = study.decreasing_pairs
    med = study.median_gap[:-1]
    _require(dec == total, f"mean-field gap not strictly decreasing: medians {np.round(med, 4).tolist()}")
    return "median W2 gaps " + ", ".join(f"{g:.3f}" for g in med)


def euler_configs() -> tuple[dynamics.RunConfig, dynamics.RunConfig]:
    jump = ScheduleSet(beta=Constant(1.0), sigma=Constant(0.5), gamma=Constant(0.5), lambda_=Constant(2.0), alpha=10.0)
    drift = ScheduleSet(beta=Constant(1.0), sigma=Constant(0.0), alpha=10.0)
    f = objective.quadratic_shifted(2)
    j = dynamics.RunConfig(dynamics.ModelVariant("jump_cbo"), jump, f, 20, 5.0, 0.04, init_box=(-2.0, 2.0), master_seed=3)
    d = dynamics.RunConfig(dynamics.ModelVariant("anisotropic_cbo"), drift, f, 20, 5.0, 0.04, init_box=(-2.0, 2.0), master_seed=3)
    return j, d


EULER_LEVELS = (0.04, 0.02, 0.01, 0.005)


def check_euler_refinement() -> str:
    jump_cfg, drift_cfg = euler_configs()
    jr = diagnostics.euler_refinement_study(jump_cfg, EULER_LEVELS, 20)
    _require(bool(np.all(np.diff(jr.ms_error) < 0)),
             f"Euler ms_error not strictly decreasing: {jr.ms_error.tolist()}")
    dr = diagnostics.euler_refinement_study(drift_cfg, EULER_LEVELS, 5)
    ratios = dr.rms_ratios
    _require(bool(np.all(np.abs(ratios - 2.0) <= 0.2)), f"pure-drift error ratios {ratios.tolist()} not 2 +/- 0.2")
    return "drift ratios " + ", ".join(f"{r:.3f}" for r in ratios)


FAST_CHECKS = [
    Check("consensus shift invariance", "consensus stabilization", check_shift_invariance),
    Check("consensus scale invariance", "consensus weights", check_scale_invariance),
    Check("convex hull membership", "consensus weights", check_convex_hull),
    Check("jump degeneracy", "jump term of the Euler step", check_jump_degeneracy),
    Check("backend agreement", "compiled stepper", check_backend_agreement),
    Check("worker determinism", "experiment seeding", check_worker_determinism),
    Check("Poisson/Gaussian moments", "noise sampling", check_poisson_moments),
    Check("decay exponent closed form", "decay_exponent", check_decay_formula),
    Check("M stabilization", "diagnostics M(t)", check_m_stabilization),
    Check("W2 triangle inequality", "W2 estimator", check_w2_triangle),
]

FULL_CHECKS = FAST_CHECKS + [
    Check("pinned-consensus decay oracle", "decay_exponent mismatch", check_decay_oracle),
    Check("mean-field trend", "particle-count convergence", check_meanfield_trend),
    Check("Euler refinement", "time-step convergence", check_euler_refinement),
]


def run_checks(level: str = "fast", report: Callable[[str], None] | None = None) -> list:
    if level not in ("fast", "full"):
        raise ValueError(f"level must be 'fast' or 'full', got {level!r}")
    results = []
    for check in FAST_CHECKS if level == "fast" else FULL_CHECKS:
        t0 = time.perf_counter()
        try:
            detail, ok = check.fn(), True
        except Exception as exc:  # any exception fails the check and is reported
            detail, ok = f"{type(exc).__name__}: {exc}", False
        res = CheckResult(check.name, check.culprit, ok, detail, time.perf_counter() - t0)
        results.append(res)
        if report:
            report(res.line())
    return results
