"""Empirical checks of the convergence theory.

Variance and M(t) tracking, the consensus-formation condition, pinned
consensus decay rates, mean-field (N-refinement) and Euler (h-refinement)
studies, and alpha sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import RunConfig, Trajectory, coefficients, decay_exponent, integrate, make_noise
from .stochastic import CoupledNoise, derive_seed, second_moment


@dataclass
class DiagnosticsRecord:
    times: np.ndarray
    variance: np.ndarray
    m_shift: np.ndarray
    m_scaled: np.ndarray
    alpha: float
    consensus_path: np.ndarray
    dist_to_min: Optional[np.ndarray] = None

    @property
    def log_m(self) -> np.ndarray:
        """log M(t), free of underflow."""
        return -self.alpha * self.m_shift + np.log(self.m_scaled)

    @property
    def m_estimate(self) -> np.ndarray:
        """M(t) = mean_i exp(-alpha f(X_i)); may underflow where log_m is very negative."""
        return np.exp(-self.alpha * self.m_shift) * self.m_scaled


def ensemble_variance(positions: np.ndarray) -> float:
    """(1/N) sum_i |x_i - mean|^2."""
    x = np.asarray(positions, float)
    return float(np.mean(np.sum((x - x.mean(axis=0)) ** 2, axis=1)))


def ensemble_m(values: np.ndarray, alpha: float) -> tuple[float, float]:
    """M = exp(-alpha * shift) * scaled, returned as ``(shift, scaled)`` with shift = min f."""
    values = np.asarray(values, float)
    shift = float(values.min())
    return shift, float(np.mean(np.exp(-alpha * (values - shift))))


def record(trajectory: Trajectory, f, alpha: float) -> DiagnosticsRecord:
    if trajectory.snapshots is None or len(trajectory.snapshots) == 0:
        raise ValueError("trajectory has no stored snapshots")
    var, shifts, scaled = [], [], []
    for x in trajectory.snapshots:
        var.append(ensemble_variance(x))
        s, m = ensemble_m(f(x), alpha)
        shifts.append(s)
        scaled.append(m)
    dist = None
    if getattr(f, "known_minimizer", None) is not None:
        dist = np.linalg.norm(trajectory.snapshot_consensus - f.known_minimizer, axis=1)
    return DiagnosticsRecord(
        times=np.asarray(trajectory.times),
        variance=np.array(var),
        m_shift=np.array(shifts),
        m_scaled=np.array(scaled),
        alpha=alpha,
        consensus_path=np.asarray(trajectory.snapshot_consensus),
        dist_to_min=dist,
    )


@dataclass
class ConsensusConditionReport:
    chi_min: float
    eta: float
    condition_met: bool
    times: np.ndarray = field(repr=False)
    chi: np.ndarray = field(repr=False)


def consensus_conditions(config: RunConfig, var0: float, m0: float, K1: float, K2: float, K3: float,
                         f_min: float | None = None) -> ConsensusConditionReport:
    """Evaluate chi(t) on the step grid and eta for the consensus-formation theorem.

    chi(t) = 2 beta - (c^2 sigma^2 + lambda gamma^2 E Z^2)(1 + 2 e^{-alpha f_m} / M(0))
    eta    = 4 alpha e^{-alpha f_m} Var(0) (K1 sup beta + K2 c^2 sigma(0)^2 / 2
             + K3 lambda(0) gamma(0)^2 E Z^2) / (M(0)^2 chi_min)

    With the default c = sqrt(2) these are the published expressions.
    """
    f_m = config.objective.known_minimum if f_min is None else f_min
    if f_m is None:
        raise ValueError("consensus conditions need the objective's minimum value f_m")
    if not m0 > 0:
        raise ValueError("M(0) must be positive")
    alpha = config.schedules.alpha
    ez2 = second_moment(config.jump_dist)
    t = np.arange(config.n_steps + 1) * config.step
    beta, csig, gam, lam = coefficients(config, t)
    ratio = math.exp(-alpha * f_m) / m0
    noise = csig**2 + lam * gam**2 * ez2
    chi = 2.0 * beta - noise * (1.0 + 2.0 * ratio)
    chi_min = float(chi.min())
    if var0 == 0:
        eta = 0.0
    elif chi_min <= 0:
        eta = math.inf
    else:
        c2_half = 0.5 * config.variant.diffusion_factor**2
        numer = K1 * float(beta.max()) + K2 * c2_half * (csig[0] / config.variant.diffusion_factor) ** 2 \
            + K3 * lam[0] * gam[0] ** 2 * ez2
        eta = 4.0 * alpha * math.exp(-alpha * f_m) * var0 * numer / (m0**2 * chi_min)
    return ConsensusConditionReport(chi_min, float(eta), bool(chi_min > 0 and eta <= 0.75), t, chi)


# --- pinned consensus ---------------------------------------------------------

@dataclass
class PinnedDecayResult:
    times: np.ndarray
    mean_square: np.ndarray
    fitted_rate: float
    predicted_rate: float

    @property
    def relative_error(self) -> float:
        return abs(self.fitted_rate - self.predicted_rate) / abs(self.predicted_rate)


def pinned_decay(config: RunConfig, center=None, run_index: int = 0, n_samples: int = 21) -> PinnedDecayResult:
    """Fit the exponential rate of mean |Y - V|^2 with the consensus pinned at V.

    Each particle is an independent path once the consensus is pinned, so a
    single run with ``n_particles`` particles gives that many paths.  The
    rate is the least-squares slope of log mean |Y - V|^2 over ``n_samples``
    equally spaced times; the prediction is the closed form at t = 0.
    """
    d = config.dimension
    v = np.zeros(d) if center is None else np.broadcast_to(np.asarray(center, float), (d,))
    stride = max(1, config.n_steps // (n_samples - 1))
    cfg = config.replace(snapshot_stride=stride)
    times, ms = [], []

    def grab(k, t, x):
        times.append(t)
        ms.append(np.mean(np.sum((x - v) ** 2, axis=1)))

    integrate(cfg, run_index, pinned_consensus=v, keep_snapshots=False, callback=grab)
    times = np.array(times)
    ms = np.array(ms)
    slope = np.polyfit(times, np.log(ms), 1)[0]
    predicted = decay_exponent(config.schedules, config.variant, 0.0, config.jump_dist, dimension=d)
    return PinnedDecayResult(times, ms, float(slope), float(predicted))


# --- transport distances ------------------------------------------------------

def wasserstein2_1d(a, b) -> float:
    """Exact W2 between two uniform empirical measures on the line (any sizes)."""
    a = np.sort(np.asarray(a, float).ravel())
    b = np.sort(np.asarray(b, float).ravel())
    if a.size == b.size:
        return float(np.sqrt(np.mean((a - b) ** 2)))
    # integrate (F_a^{-1}(u) - F_b^{-1}(u))^2 over the merged quantile breakpoints
    cuts = np.union1d(np.arange(1, a.size) / a.size, np.arange(1, b.size) / b.size)
    edges = np.concatenate([[0.0], cuts, [1.0]])
    mid = 0.5 * (edges[1:] + edges[:-1])
    ia = np.minimum((mid * a.size).astype(int), a.size - 1)
    ib = np.minimum((mid * b.size).astype(int), b.size - 1)
    return float(np.sqrt(np.sum(np.diff(edges) * (a[ia] - b[ib]) ** 2)))


def sliced_wasserstein2(x, y, n_directions: int = 64, seed: int = 0) -> float:
    """Sliced W2 with a fixed set of random unit directions."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    d = x.shape[1]
    dirs = np.random.default_rng(seed).standard_normal((n_directions, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    total = sum(wasserstein2_1d(x @ u, y @ u) ** 2 for u in dirs)
    return float(np.sqrt(total / n_directions))


def empirical_w2(x, y) -> float:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.ndim == 1 or x.shape[1] == 1:
        return wasserstein2_1d(x, y)
    return sliced_wasserstein2(x, y)


# --- refinement studies -------------------------------------------------------

@dataclass
class MeanFieldStudy:
    n_levels: list
    gaps: np.ndarray  # (repetitions, levels)

    @property
    def mean_gap(self) -> np.ndarray:
        return self.gaps.mean(axis=0)

    @property
    def median_gap(self) -> np.ndarray:
        return np.median(self.gaps, axis=0)

    @property
    def decreasing_pairs(self) -> tuple[int, int]:
        """(strictly decreasing consecutive median pairs, total pairs), reference level excluded."""
        m = self.median_gap[:-1]
        return int(np.sum(np.diff(m) < 0)), max(len(m) - 1, 0)

    def rows(self) -> list[dict]:
        return [{"n_particles": n, "mean_gap": float(a), "median_gap": float(b)}
                for n, a, b in zip(self.n_levels, self.mean_gap, self.median_gap)]


def meanfield_gap_study(base: RunConfig, n_levels: Sequence[int], paired_runs: int) -> MeanFieldStudy:
    """W2 gap between the terminal empirical measure at each N and at the largest N.

    Run ``r`` at every level uses the same run seed, so a level equal to the
    reference reproduces it exactly.
    """
    levels = [int(n) for n in n_levels]
    if len(levels) < 3:
        raise ValueError("mean-field study needs at least 3 particle counts")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("particle counts must be strictly ascending")
    stride = max(base.n_steps, 1)
    gaps = np.zeros((paired_runs, len(levels)))
    for r in range(paired_runs):
        ref = integrate(base.replace(n_particles=levels[-1], snapshot_stride=stride), r, keep_snapshots=False)
        for j, n in enumerate(levels):
            if n == levels[-1]:
                traj = ref
            else:
                traj = integrate(base.replace(n_particles=n, snapshot_stride=stride), r, keep_snapshots=False)
            gaps[r, j] = empirical_w2(traj.final_positions, ref.final_positions)
    return MeanFieldStudy(levels, gaps)


@dataclass
class RefinementStudy:
    h_levels: list
    ms_error: np.ndarray
    reference_step: float

    @property
    def rms_ratios(self) -> np.ndarray:
        """sqrt(ms(h) / ms(h/2)) per halving; about 2 for a first-order error."""
        e = np.sqrt(self.ms_error)
        with np.errstate(divide="ignore", invalid="ignore"):
            return e[:-1] / e[1:]

    def rows(self) -> list[dict]:
        return [{"h": h, "ms_error": float(e)} for h, e in zip(self.h_levels, self.ms_error)]


def euler_refinement_study(base: RunConfig, h_levels: Sequence[float], paths: int,
                           reference_factor: int = 16, coupled: bool = True) -> RefinementStudy:
    """Mean-square terminal error of each step size against a finer reference.

    All levels are driven by one noise realisation generated on the reference
    grid ``min(h_levels) / reference_factor``: Wiener increments are summed
    and Poisson jumps are assigned to the coarse step that contains them.
    ``paths`` independent runs are averaged (every particle counts as a path).
    """
    if not coupled:
        raise ValueError("Euler refinement needs coupled noise across levels")
    h_levels = [float(h) for h in h_levels]
    if len(h_levels) < 3:
        raise ValueError("Euler refinement needs at least 3 step sizes")
    for a, b in zip(h_levels, h_levels[1:]):
        if not math.isclose(a, 2.0 * b, rel_tol=1e-9):
            raise ValueError("step sizes must halve from one level to the next")
    if reference_factor < 1 or reference_factor & (reference_factor - 1):
        raise ValueError("reference_factor must be a power of two")
    h_ref = h_levels[-1] / reference_factor
    n_ref = round(base.horizon / h_ref)
    if abs(n_ref * h_ref - base.horizon) > 1e-9 * max(1.0, base.horizon):
        raise ValueError("horizon must be a multiple of every step size")
    ms = np.zeros(len(h_levels))
    for r in range(paths):
        seed = derive_seed(base.master_seed, r)
        ref_cfg = base.replace(step=h_ref, snapshot_stride=n_ref or 1)
        ref = integrate(ref_cfg, r, noise=make_noise(ref_cfg, seed), keep_snapshots=False)
        for j, h in enumerate(h_levels):
            factor = round(h / h_ref)
            cfg = base.replace(step=h, snapshot_stride=max(round(base.horizon / h), 1))
            noise = CoupledNoise(make_noise(ref_cfg, seed), factor)
            traj = integrate(cfg, r, noise=noise, keep_snapshots=False)
            ms[j] += np.mean(np.sum((traj.final_positions - ref.final_positions) ** 2, axis=1))
    return RefinementStudy(h_levels, ms / paths, h_ref)


def alpha_sweep(base: RunConfig, alphas: Sequence[float], repetitions: int = 10) -> list[tuple[float, float]]:
    """Median over runs of f(terminal consensus) - f_m for each alpha."""
    f = base.objective
    if f.known_minimum is None:
        raise ValueError("alpha sweep needs the objective's minimum value")
    alphas = [float(a) for a in alphas]
    if any(a <= 0 for a in alphas) or any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be positive and ascending")
    stride = max(base.n_steps, 1)
    out = []
    for a in alphas:
        cfg = base.replace(schedules=base.schedules.replace(alpha=a), snapshot_stride=stride)
        gaps = [f(integrate(cfg, r, keep_snapshots=False).final_consensus) - f.known_minimum
                for r in range(repetitions)]
        out.append((a, float(np.median(gaps))))
    return out
