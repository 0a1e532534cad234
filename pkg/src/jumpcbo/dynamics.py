"""Euler integration of the CBO particle systems.

Seven model variants share one stepper::

    Y_{k+1} = Y_k - beta(t_k) H_i (Y_k - Ybar) h
              + c sigma(t_k) diag(Y_k - Ybar) dW_k          (|Y_k - Ybar| dW_k when isotropic)
              + gamma(t_k) diag(Y_k - Ybar) sum_j Z_j

where ``c`` is sqrt(2) or 1, ``H_i`` is a smoothed Heaviside factor (only for
``heaviside_cbo``, otherwise 1) and the jump sum collects the compound-Poisson
jumps arriving during the step.  Everything on the right-hand side is read
from the start-of-step ensemble.
"""

from __future__ import annotations

import dataclasses
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .consensus import NonFiniteStateError, consensus_from_values, validate_ensemble
from .objective import ObjectiveFunction
from .schedules import ScheduleSet
from .stochastic import (
    JumpSizeDistribution,
    NoiseSource,
    channel_stream,
    derive_seed,
    second_moment,
    standard_gaussian,
)

VARIANT_TAGS = (
    "heaviside_cbo",
    "isotropic_cbo",
    "anisotropic_cbo",
    "jump_cbo",
    "jump_cbo_common_poisson",
    "jump_cbo_time_intensity",
    "cbo_common_wiener",
)

# column names used in the published success-rate tables
TABLE_LABELS = {
    "anisotropic_cbo": "CBO",
    "cbo_common_wiener": "CBOwCWN",
    "jump_cbo": "JumpCBO",
    "jump_cbo_common_poisson": "JumpCBOwCPN",
}

CHUNK = 64


@dataclass(frozen=True)
class ModelVariant:
    tag: str = "jump_cbo"
    heaviside_epsilon: float = 1e-3
    sqrt2_in_diffusion: bool = True

    def __post_init__(self):
        if self.tag not in VARIANT_TAGS:
            raise ValueError(f"unknown model variant {self.tag!r}; choose from {VARIANT_TAGS}")
        if self.tag == "heaviside_cbo" and not self.heaviside_epsilon > 0:
            raise ValueError("heaviside_cbo needs heaviside_epsilon > 0")

    @property
    def has_jumps(self) -> bool:
        return self.tag.startswith("jump_cbo")

    @property
    def isotropic(self) -> bool:
        return self.tag in ("heaviside_cbo", "isotropic_cbo")

    @property
    def common_wiener(self) -> bool:
        return self.tag == "cbo_common_wiener"

    @property
    def common_poisson(self) -> bool:
        return self.tag == "jump_cbo_common_poisson"

    @property
    def diffusion_factor(self) -> float:
        return math.sqrt(2.0) if self.sqrt2_in_diffusion else 1.0

    @property
    def label(self) -> str:
        return TABLE_LABELS.get(self.tag, self.tag)

    def to_dict(self) -> dict:
        out = {"tag": self.tag, "sqrt2_in_diffusion": self.sqrt2_in_diffusion}
        if self.tag == "heaviside_cbo":
            out["heaviside_epsilon"] = self.heaviside_epsilon
        return out

    @classmethod
    def from_dict(cls, spec) -> "ModelVariant":
        if isinstance(spec, str):
            return cls(spec)
        return cls(**spec)


@dataclass(frozen=True, eq=False)
class RunConfig:
    variant: ModelVariant
    schedules: ScheduleSet
    objective: ObjectiveFunction
    n_particles: int
    horizon: float
    step: float = 0.01
    init_box: tuple = (-6.0, 6.0)
    master_seed: int = 0
    jump_dist: JumpSizeDistribution = field(default_factory=standard_gaussian)
    snapshot_stride: int = 100

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError(f"n_particles must be >= 1, got {self.n_particles}")
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if self.horizon < 0:
            raise ValueError(f"horizon must be nonnegative, got {self.horizon}")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        lo, hi = self.bounds
        if lo.shape != (self.dimension,) or np.any(lo >= hi):
            raise ValueError(f"init_box needs lo < hi in every component, got {self.init_box}")
        n = round(self.horizon / self.step)
        if abs(n * self.step - self.horizon) > 1e-9 * max(1.0, self.horizon):
            snapped = n * self.step
            warnings.warn(f"horizon {self.horizon} is not a multiple of step {self.step}; using {snapped}")
            object.__setattr__(self, "horizon", snapped)

    @property
    def dimension(self) -> int:
        return self.objective.dimension

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.step))

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.init_box
        d = self.objective.dimension
        return (np.broadcast_to(np.asarray(lo, float), (d,)).copy(),
                np.broadcast_to(np.asarray(hi, float), (d,)).copy())

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        lo, hi = self.init_box
        box = [np.asarray(lo).tolist(), np.asarray(hi).tolist()]
        return {
            "variant": self.variant.to_dict(),
            "schedules": self.schedules.to_dict(),
            "objective": self.objective.to_dict(),
            "n_particles": self.n_particles,
            "horizon": self.horizon,
            "step": self.step,
            "init_box": box,
            "master_seed": self.master_seed,
            "jump_dist": self.jump_dist.to_dict(),
            "snapshot_stride": self.snapshot_stride,
        }


@dataclass
class Trajectory:
    times: np.ndarray
    snapshots: Optional[np.ndarray]
    snapshot_consensus: np.ndarray
    final_positions: np.ndarray
    final_consensus: np.ndarray
    final_values: np.ndarray
    best_position: np.ndarray
    best_value: float
    n_evaluations: int
    wall_time: float
    run_index: int
    run_seed: int


def coefficients(config: RunConfig, times: np.ndarray):
    """Frozen-coefficient arrays ``(beta, c*sigma, gamma, lambda)`` on ``times``."""
    s = config.schedules
    v = config.variant
    beta = np.asarray(s.beta.values(times), float)
    csig = v.diffusion_factor * np.asarray(s.sigma.values(times), float)
    if not v.has_jumps:
        zeros = np.zeros_like(beta)
        return beta, csig, zeros, zeros
    lam = np.asarray(s.lambda_.values(times), float)
    if v.tag == "jump_cbo_time_intensity":
        gam = np.ones_like(beta)
    else:
        gam = np.asarray(s.gamma.values(times), float)
    return beta, csig, gam, lam


def make_noise(config: RunConfig, run_seed: int, step: float | None = None) -> NoiseSource:
    v = config.variant
    h = config.step if step is None else step

    def intensity(t):
        return coefficients(config, t)[3]

    return NoiseSource(
        run_seed, config.n_particles, config.dimension, h,
        jumps=v.has_jumps,
        common_wiener=v.common_wiener,
        common_poisson=v.common_poisson,
        intensity=intensity,
        dist=config.jump_dist,
    )


def initial_ensemble(config: RunConfig, run_seed: int) -> np.ndarray:
    """i.i.d. uniform positions on the initialization box."""
    lo, hi = config.bounds
    rng = channel_stream(run_seed, "init").generator()
    return rng.uniform(lo, hi, size=(config.n_particles, config.dimension))


def _smooth_heaviside(x: np.ndarray, eps: float) -> np.ndarray:
    z = x / eps
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def euler_step(positions: np.ndarray, t_k: float, config: RunConfig, increments,
               *, pinned_consensus=None, step_index: int | None = None,
               values: np.ndarray | None = None) -> np.ndarray:
    """One Euler step of ``config.variant`` from time ``t_k`` (reference numpy path).

    ``increments`` is ``(dW, S)``: Wiener increments of shape ``(N, d)`` (or
    ``(1, d)`` when shared) and per-particle summed jump sizes ``(N, d)``.
    ``pinned_consensus`` replaces the weighted average with a fixed vector.
    """
    x = validate_ensemble(positions, step_index)
    dW, S = increments
    beta, csig, gam, _ = (float(a[0]) for a in coefficients(config, np.array([t_k])))
    f = config.objective
    if pinned_consensus is None or config.variant.tag == "heaviside_cbo":
        if values is None:
            values = f(x)
    if pinned_consensus is None:
        try:
            cons = consensus_from_values(x, values, config.schedules.alpha)
        except NonFiniteStateError as exc:
            raise NonFiniteStateError(f"{exc} at step {step_index}", step_index, exc.particle) from None
    else:
        cons = np.asarray(pinned_consensus, dtype=float)
    D = x - cons
    h = config.step
    drift = -beta * h
    if config.variant.tag == "heaviside_cbo":
        drift = drift * _smooth_heaviside(values - f(cons), config.variant.heaviside_epsilon)[:, None]
    if config.variant.isotropic:
        diff = (csig * np.sqrt(np.sum(D * D, axis=1)))[:, None] * dW
    else:
        diff = (csig * D) * dW
    new = x + (drift * D + diff + (gam * D) * S)
    if not np.all(np.isfinite(new)):
        i = int(np.flatnonzero(~np.isfinite(new).all(axis=1))[0])
        raise NonFiniteStateError(f"particle {i} is not finite after step {step_index}", step_index, i)
    return new


def decay_exponent(schedules: ScheduleSet, variant: ModelVariant, t: float,
                   dist: JumpSizeDistribution | None = None, dimension: int | None = None) -> float:
    """Exponential rate of E|Y(t) - V|^2 when the consensus is pinned at a fixed V.

    -2 beta + c^2 sigma^2 + lambda gamma^2 E[Z^2] for the component-wise models;
    the isotropic diffusion contributes c^2 sigma^2 d instead and needs ``dimension``.
    """
    if variant.tag == "heaviside_cbo":
        raise ValueError("the smoothed-Heaviside drift has no closed-form pinned decay rate")
    t = np.array([float(t)])
    beta = float(schedules.beta.values(t)[0])
    sigma = float(schedules.sigma.values(t)[0])
    c2 = variant.diffusion_factor**2
    if variant.isotropic:
        if dimension is None:
            raise ValueError("the isotropic model's decay rate depends on the dimension")
        diffusion = c2 * sigma**2 * dimension
    else:
        diffusion = c2 * sigma**2
    jump = 0.0
    if variant.has_jumps:
        lam = float(schedules.lambda_.values(t)[0])
        gam = 1.0 if variant.tag == "jump_cbo_time_intensity" else float(schedules.gamma.values(t)[0])
        jump = lam * gam**2 * second_moment(dist or standard_gaussian())
    return -2.0 * beta + diffusion + jump


def integrate(config: RunConfig, run_index: int = 0, *, noise=None, pinned_consensus=None,
              backend: str = "auto", keep_snapshots: bool = True,
              callback: Callable[[int, float, np.ndarray], None] | None = None) -> Trajectory:
    """Simulate one run: uniform initialization, then ``n_steps`` Euler steps.

    Snapshots (positions and consensus) are taken every ``snapshot_stride``
    steps and at the final time; ``callback(k, t, positions)`` is invoked at
    the same instants.  ``backend`` is ``"numba"``, ``"numpy"`` or ``"auto"``
    (compiled when the objective ships a kernel).
    """
    f = config.objective
    if backend == "auto":
        backend = "numba" if f.kernel is not None else "numpy"
    if backend == "numba" and f.kernel is None:
        raise ValueError(f"objective {f.name!r} has no compiled kernel")
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")

    started = time.perf_counter()
    alpha = config.schedules.alpha
    run_seed = derive_seed(config.master_seed, run_index)
    x = initial_ensemble(config, run_seed)
    if noise is None:
        noise = make_noise(config, run_seed)
    n, N, d = config.n_steps, config.n_particles, config.dimension
    h = config.step
    stride = config.snapshot_stride
    pinned = None if pinned_consensus is None else np.broadcast_to(
        np.asarray(pinned_consensus, float), (d,)).copy()

    times, snaps, snap_cons = [], [], []

    def snapshot(k):
        t = k * h
        times.append(t)
        if keep_snapshots:
            snaps.append(x.copy())
        snap_cons.append(consensus_from_values(x, f(x), alpha) if pinned is None else pinned.copy())
        if callback is not None:
            callback(k, t, x)

    vals0 = f(x)
    best_i = int(np.argmin(vals0))
    best_x = x[best_i].copy()
    best_f = np.array([float(vals0[best_i]) if pinned is None else np.inf])
    n_evals = N
    snapshot(0)

    fv = np.empty(N)
    cons = np.empty(d)
    use_pinned = pinned is not None
    pinned_arr = pinned if use_pinned else np.zeros(d)
    heps = config.variant.heaviside_epsilon if config.variant.tag == "heaviside_cbo" else 0.0

    k0 = 0
    while k0 < n:
        next_snap = (k0 // stride + 1) * stride
        c = min(CHUNK, n - k0, next_snap - k0)
        t = (k0 + np.arange(c)) * h
        beta, csig, gam, _ = coefficients(config, t)
        dW, S = noise.draw(k0, c)
        if backend == "numba":
            status, off, particle, used = _kernels.advance(
                f.kernel, f.kernel_params, x, dW, S, beta, csig, gam, h, alpha,
                config.variant.isotropic, heps, pinned_arr, use_pinned, best_x, best_f, fv, cons)
            n_evals += used
            if status != _kernels.OK:
                what = "objective value" if status == _kernels.NONFINITE_OBJECTIVE else "position"
                raise NonFiniteStateError(
                    f"{what} of particle {particle} is not finite at step {k0 + off}",
                    step=k0 + off, particle=particle)
        else:
            for j in range(c):
                vals = f(x)
                if pinned is None:
                    n_evals += N
                    i = int(np.argmin(vals))
                    if vals[i] < best_f[0]:
                        best_f[0] = vals[i]
                        best_x = x[i].copy()
                if heps > 0:
                    n_evals += 1
                x = euler_step(x, t[j], config, (dW[j], S[j]), pinned_consensus=pinned,
                               step_index=k0 + j, values=vals)
        k0 += c
        if k0 % stride == 0 or k0 == n:
            snapshot(k0)

    final_values = f(x)
    final_cons = consensus_from_values(x, final_values, alpha)
    i = int(np.argmin(final_values))
    if final_values[i] < best_f[0]:
        best_f[0] = final_values[i]
        best_x = x[i].copy()
    return Trajectory(
        times=np.array(times),
        snapshots=np.array(snaps) if keep_snapshots else None,
        snapshot_consensus=np.array(snap_cons),
        final_positions=x.copy(),
        final_consensus=final_cons,
        final_values=final_values,
        best_position=best_x.copy(),
        best_value=float(best_f[0]),
        n_evaluations=int(n_evals),
        wall_time=time.perf_counter() - started,
        run_index=run_index,
        run_seed=run_seed,
    )
