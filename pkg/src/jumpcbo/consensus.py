"""Weighted consensus point of a particle ensemble."""

from __future__ import annotations

import numpy as np


class NonFiniteStateError(FloatingPointError):
    """A particle position or objective value became NaN or infinite."""

    def __init__(self, message: str, step: int | None = None, particle: int | None = None):
        super().__init__(message)
        self.step = step
        self.particle = particle


def validate_ensemble(positions: np.ndarray, step: int | None = None) -> np.ndarray:
    """Return ``positions`` as a float ``(N, d)`` array, raising on non-finite entries."""
    x = np.asarray(positions, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"ensemble must have shape (N, d) with N, d >= 1, got {x.shape}")
    bad = ~np.isfinite(x).all(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        where = "" if step is None else f" at step {step}"
        raise NonFiniteStateError(f"particle {i} is not finite{where}", step=step, particle=i)
    return x


def _stabilizing_shift(values: np.ndarray) -> float:
    return values.min()


def consensus_weights(values: np.ndarray, alpha: float) -> np.ndarray:
    """Normalized softmin weights exp(-alpha f_i) / sum_j exp(-alpha f_j).

    The batch minimum is subtracted before exponentiating, which leaves the
    ratio unchanged but keeps the largest weight at exactly 1.
    """
    values = np.asarray(values, dtype=float)
    w = np.exp(-alpha * (values - _stabilizing_shift(values)))
    return w / w.sum()


def consensus_from_values(positions: np.ndarray, values: np.ndarray, alpha: float) -> np.ndarray:
    """Consensus point for precomputed objective values (one per particle)."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    x = np.asarray(positions, dtype=float)
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        i = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NonFiniteStateError(f"objective value of particle {i} is not finite", particle=i)
    w = np.exp(-alpha * (values - _stabilizing_shift(values)))
    # offsets from the best particle keep coincident ensembles exact;
    # the axis-0 reduction runs in ascending particle order
    anchor = x[int(np.argmin(values))]
    return anchor + (w[:, None] * (x - anchor)).sum(axis=0) / w.sum()


def consensus_point(positions: np.ndarray, f, alpha: float) -> np.ndarray:
    """Softmin-weighted average sum_i x_i exp(-alpha f(x_i)) / sum_i exp(-alpha f(x_i))."""
    x = validate_ensemble(positions)
    return consensus_from_values(x, f(x), alpha)
