"""Objective functions and the benchmark problems used in the experiments.

Every objective evaluates on a single point of shape ``(d,)`` or on a batch of
shape ``(..., d)``.  Built-in benchmarks also carry a scalar numba kernel so
the compiled stepper can evaluate them without leaving native code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels


@dataclass(frozen=True, eq=False)
class ObjectiveFunction:
    """A scalar objective f: R^d -> R with optional minimizer metadata.

    ``fn`` maps an array of shape ``(..., d)`` to shape ``(...)``.  ``kernel``
    is an optional numba-jitted ``kernel(x, params) -> float`` used by the
    compiled integrator; objectives without one fall back to the numpy path.
    """

    name: str
    dimension: int
    fn: Callable[[np.ndarray], np.ndarray]
    known_minimizer: Optional[np.ndarray] = None
    known_minimum: Optional[float] = None
    kernel: Optional[Callable] = None
    kernel_params: np.ndarray = field(default_factory=lambda: np.zeros(0))
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        if self.known_minimizer is not None:
            xm = np.asarray(self.known_minimizer, dtype=float)
            xm.setflags(write=False)
            object.__setattr__(self, "known_minimizer", xm)
        kp = np.ascontiguousarray(self.kernel_params, dtype=float)
        kp.setflags(write=False)
        object.__setattr__(self, "kernel_params", kp)

    def evaluate(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dimension:
            raise ValueError(
                f"{self.name}: expected trailing dimension {self.dimension}, got shape {x.shape}"
            )
        out = self.fn(x)
        if x.ndim == 1:
            return float(out)
        return out

    __call__ = evaluate

    def to_dict(self) -> dict:
        return {"name": self.name, "dimension": self.dimension, **self.params}


def rastrigin(d: int, shift: float = 0.0) -> ObjectiveFunction:
    """Rastrigin scaled by 1/d: 10 + sum((x-B)^2 - 10 cos(2 pi (x-B))) / d."""
    if d < 1:
        raise ValueError(f"rastrigin needs d >= 1, got {d}")
    shift = float(shift)

    def fn(x):
        y = x - shift
        return 10.0 + np.sum(y * y - 10.0 * np.cos(2.0 * np.pi * y), axis=-1) / d

    return ObjectiveFunction(
        name="rastrigin",
        dimension=d,
        fn=fn,
        known_minimizer=np.full(d, shift),
        known_minimum=0.0,
        kernel=_kernels.rastrigin_kernel,
        kernel_params=np.array([shift]),
        params={"shift": shift},
    )


def rosenbrock(d: int) -> ObjectiveFunction:
    """Rosenbrock scaled by 1/d."""
    if d < 2:
        raise ValueError(f"rosenbrock needs d >= 2, got {d}")

    def fn(x):
        a = x[..., :-1]
        b = x[..., 1:]
        return np.sum(100.0 * (b - a * a) ** 2 + (a - 1.0) ** 2, axis=-1) / d

    return ObjectiveFunction(
        name="rosenbrock",
        dimension=d,
        fn=fn,
        known_minimizer=np.ones(d),
        known_minimum=0.0,
        kernel=_kernels.rosenbrock_kernel,
    )


def quadratic_shifted(d: int, center=None) -> ObjectiveFunction:
    """f(x) = 1 + |x - V|^2, strictly positive with minimum 1 at V."""
    if d < 1:
        raise ValueError(f"quadratic needs d >= 1, got {d}")
    v = np.zeros(d) if center is None else np.broadcast_to(np.asarray(center, float), (d,)).copy()

    def fn(x):
        y = x - v
        return 1.0 + np.sum(y * y, axis=-1)

    return ObjectiveFunction(
        name="quadratic",
        dimension=d,
        fn=fn,
        known_minimizer=v.copy(),
        known_minimum=1.0,
        kernel=_kernels.quadratic_kernel,
        kernel_params=v.copy(),
        params={"center": v.tolist()},
    )


def constant(d: int, value: float = 1.0) -> ObjectiveFunction:
    """Flat objective; every point is a minimizer.  Used as a degenerate test case."""
    value = float(value)

    def fn(x):
        return np.full(x.shape[:-1], value)

    return ObjectiveFunction(
        name="constant",
        dimension=d,
        fn=fn,
        known_minimum=value,
        kernel=_kernels.constant_kernel,
        kernel_params=np.array([value]),
        params={"value": value},
    )


BENCHMARKS = {
    "rastrigin": rastrigin,
    "rosenbrock": rosenbrock,
    "quadratic": quadratic_shifted,
    "constant": constant,
}


def from_dict(spec: dict) -> ObjectiveFunction:
    """Build a benchmark objective from its config-file form, e.g. ``{"name": "rastrigin", "dimension": 20}``."""
    spec = dict(spec)
    name = spec.pop("name")
    d = int(spec.pop("dimension"))
    if name not in BENCHMARKS:
        raise ValueError(f"unknown objective {name!r}; choose from {sorted(BENCHMARKS)}")
    return BENCHMARKS[name](d, **spec)


def quadratic_consensus_constants() -> tuple[float, float, float]:
    """K1, K2, K3 for f = 1 + |x - V|^2 in the consensus-formation condition.

    Monotonicity of the gradient holds with any K1 > 0 (2 is used), the
    second-derivative bound gives K2 = 2 and the jump bound is sharp with K3 = 1.
    """
    return 2.0, 2.0, 1.0
