"""Time-dependent coefficients beta(t), sigma(t), gamma(t), lambda(t) and presets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np


@dataclass(frozen=True)
class Constant:
    value: float

    kind = "constant"

    def values(self, t: np.ndarray) -> np.ndarray:
        return np.full(np.shape(t), float(self.value))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": float(self.value)}


@dataclass(frozen=True)
class ExponentialApproach:
    """``limit + amplitude * exp(-t / rate)``."""

    limit: float
    amplitude: float
    rate: float

    kind = "exponential_approach"

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError(f"rate must be positive, got {self.rate}")

    def values(self, t: np.ndarray) -> np.ndarray:
        return self.limit + self.amplitude * np.exp(-np.asarray(t, float) / self.rate)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "limit": self.limit, "amplitude": self.amplitude, "rate": self.rate}


@dataclass(frozen=True)
class PiecewiseExponentialDecay:
    """Plateau ``v`` up to ``t_switch``, then ``v * exp((t_switch - t) / rate)``."""

    v: float
    t_switch: float
    rate: float

    kind = "piecewise_exponential_decay"

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError(f"rate must be positive, got {self.rate}")

    def values(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, float)
        decay = self.v * np.exp(np.minimum(self.t_switch - t, 0.0) / self.rate)
        return np.where(t <= self.t_switch, float(self.v), decay)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "v": self.v, "t_switch": self.t_switch, "rate": self.rate}


@dataclass(frozen=True)
class Table:
    """Piecewise-linear interpolation through ``(t, value)`` pairs, flat outside."""

    t: tuple
    value: tuple

    kind = "table"

    def __post_init__(self):
        t = tuple(float(x) for x in self.t)
        v = tuple(float(x) for x in self.value)
        if len(t) != len(v) or len(t) == 0:
            raise ValueError("table schedule needs equally many (at least one) times and values")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("table times must be strictly increasing")
        if not all(math.isfinite(x) for x in t + v):
            raise ValueError("table entries must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "value", v)

    def values(self, t: np.ndarray) -> np.ndarray:
        return np.interp(np.asarray(t, float), self.t, self.value)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "t": list(self.t), "value": list(self.value)}


Schedule = Union[Constant, ExponentialApproach, PiecewiseExponentialDecay, Table]

_KINDS = {cls.kind: cls for cls in (Constant, ExponentialApproach, PiecewiseExponentialDecay, Table)}


def evaluate(schedule: Schedule, t) -> float | np.ndarray:
    """Value of ``schedule`` at time(s) ``t >= 0``."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError(f"schedules are defined for t >= 0, got {t}")
    out = schedule.values(arr)
    return float(out) if arr.ndim == 0 else out


def from_dict(spec: dict | float | int) -> Schedule:
    """Parse the tagged config form, e.g. ``{"kind": "constant", "value": 1.0}``.

    A bare number is shorthand for a constant schedule.
    """
    if isinstance(spec, (int, float)):
        return Constant(float(spec))
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in _KINDS:
        raise ValueError(f"unknown schedule kind {kind!r}; choose from {sorted(_KINDS)}")
    try:
        return _KINDS[kind](**spec)
    except TypeError as exc:
        raise ValueError(f"bad parameters for schedule kind {kind!r}: {exc}") from None


def is_monotone(schedule: Schedule, horizon: float, n: int = 10_000) -> str:
    """Classify the sampled trend on [0, horizon]: 'constant', 'nonincreasing', 'nondecreasing' or 'mixed'."""
    v = schedule.values(np.linspace(0.0, horizon, n))
    dv = np.diff(v)
    if np.all(dv == 0):
        return "constant"
    if np.all(dv <= 0):
        return "nonincreasing"
    if np.all(dv >= 0):
        return "nondecreasing"
    return "mixed"


@dataclass(frozen=True)
class ScheduleSet:
    beta: Schedule
    sigma: Schedule
    gamma: Schedule = field(default_factory=lambda: Constant(0.0))
    lambda_: Schedule = field(default_factory=lambda: Constant(0.0))
    alpha: float = 30.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")

    def check(self, horizon: float, n: int = 10_000) -> None:
        """Raise if any coefficient is non-finite, or sigma/gamma/lambda negative, on [0, horizon]."""
        t = np.linspace(0.0, max(horizon, 0.0), n)
        for name in ("beta", "sigma", "gamma", "lambda_"):
            v = getattr(self, name).values(t)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"schedule {name} is not finite on [0, {horizon}]")
            if name != "beta" and np.any(v < 0):
                raise ValueError(f"schedule {name} takes negative values on [0, {horizon}]")

    def replace(self, **changes) -> "ScheduleSet":
        fields = {k: getattr(self, k) for k in ("beta", "sigma", "gamma", "lambda_", "alpha")}
        fields.update(changes)
        return ScheduleSet(**fields)

    def to_dict(self) -> dict:
        return {
            "alpha": float(self.alpha),
            "beta": self.beta.to_dict(),
            "sigma": self.sigma.to_dict(),
            "gamma": self.gamma.to_dict(),
            "lambda": self.lambda_.to_dict(),
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "ScheduleSet":
        spec = dict(spec)
        base = preset(spec.pop("preset")) if "preset" in spec else None
        kw = {}
        for key, attr in (("beta", "beta"), ("sigma", "sigma"), ("gamma", "gamma"), ("lambda", "lambda_"), ("lambda_", "lambda_")):
            if key in spec:
                kw[attr] = from_dict(spec.pop(key))
        if "alpha" in spec:
            kw["alpha"] = float(spec.pop("alpha"))
        if spec:
            raise ValueError(f"unknown schedule-set keys: {sorted(spec)}")
        if base is not None:
            return base.replace(**kw)
        return cls(**kw)


def _rastrigin_exp1(alpha: float) -> ScheduleSet:
    return ScheduleSet(
        beta=Constant(1.0),
        sigma=Constant(5.1),
        gamma=PiecewiseExponentialDecay(v=1.0, t_switch=20.0, rate=20.0),
        lambda_=Constant(20.0),
        alpha=alpha,
    )


def _rosenbrock_exp2(alpha: float) -> ScheduleSet:
    return ScheduleSet(
        beta=ExponentialApproach(limit=2.0, amplitude=-1.0, rate=100.0),
        sigma=ExponentialApproach(limit=4.0, amplitude=1.0, rate=90.0),
        gamma=PiecewiseExponentialDecay(v=1.0, t_switch=90.0, rate=90.0),
        lambda_=Constant(90.0),
        alpha=alpha,
    )


def _rosenbrock_exp2_nojump(alpha: float) -> ScheduleSet:
    return ScheduleSet(beta=Constant(1.0), sigma=Constant(5.0), alpha=alpha)


PRESETS = {
    "rastrigin-exp1-a20": lambda: _rastrigin_exp1(20.0),
    "rastrigin-exp1-a30": lambda: _rastrigin_exp1(30.0),
    "rosenbrock-exp2-a20": lambda: _rosenbrock_exp2(20.0),
    "rosenbrock-exp2-a30": lambda: _rosenbrock_exp2(30.0),
    # models without jumps in the Rosenbrock experiment run with beta = 1, sigma = 5
    "rosenbrock-exp2-a20-nojump": lambda: _rosenbrock_exp2_nojump(20.0),
    "rosenbrock-exp2-a30-nojump": lambda: _rosenbrock_exp2_nojump(30.0),
}


def preset(name: str) -> ScheduleSet:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
