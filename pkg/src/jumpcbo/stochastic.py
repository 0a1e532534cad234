"""Seeded random streams, Wiener increments and compound-Poisson jump batches.

Seeds are derived with :class:`numpy.random.SeedSequence`: a run seed is
hashed from ``(master_seed, run_index)`` and each noise channel of a run gets
its own PCG64 stream keyed by ``(run_seed, channel)``.  Draws inside a channel
are taken in a fixed (step, particle, component) order, so results never
depend on how runs are spread over workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CHANNELS = ("init", "wiener", "poisson_count", "jump_size")

_MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, run_index: int) -> int:
    """64-bit run seed hashed from the master seed and the run index."""
    ss = np.random.SeedSequence(int(master_seed) & _MASK64, spawn_key=(int(run_index),))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(int(self.seed) & _MASK64, spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))


def channel_stream(run_seed: int, channel: str) -> RngStream:
    return RngStream(run_seed, CHANNELS.index(channel))


@dataclass(frozen=True)
class JumpSizeDistribution:
    """Law of one component of a jump size; components are i.i.d. with mean zero.

    ``kind`` is ``standard_gaussian``, ``uniform_symmetric`` (on [-scale, scale])
    or ``custom_table`` (piecewise-linear density through ``(table_z, table_density)``).
    Use the factory functions below rather than the constructor.
    """

    kind: str = "standard_gaussian"
    scale: float = 1.0
    table_z: tuple = ()
    table_density: tuple = ()

    def __post_init__(self):
        if self.kind == "uniform_symmetric":
            if not (self.scale > 0 and math.isfinite(self.scale)):
                raise ValueError(f"uniform half-width must be positive and finite, got {self.scale}")
        elif self.kind == "custom_table":
            z, p = _normalized_table(self.table_z, self.table_density)
            mean = _segment_moment(z, p, 1)
            if abs(mean) >= 1e-9:
                raise ValueError(f"custom jump-size density must have zero mean, got {mean:.3e}")
        elif self.kind != "standard_gaussian":
            raise ValueError(f"unknown jump-size distribution {self.kind!r}")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "standard_gaussian":
            return rng.standard_normal(size)
        if self.kind == "uniform_symmetric":
            return rng.uniform(-self.scale, self.scale, size)
        z, p = _normalized_table(self.table_z, self.table_density)
        return _table_inverse_cdf(z, p, rng.random(size))

    def to_dict(self) -> dict:
        if self.kind == "standard_gaussian":
            return {"kind": self.kind}
        if self.kind == "uniform_symmetric":
            return {"kind": self.kind, "a": self.scale}
        return {"kind": self.kind, "z": list(self.table_z), "density": list(self.table_density)}


def standard_gaussian() -> JumpSizeDistribution:
    return JumpSizeDistribution("standard_gaussian")


def uniform_symmetric(a: float) -> JumpSizeDistribution:
    return JumpSizeDistribution("uniform_symmetric", scale=float(a))


def custom_table(z, density) -> JumpSizeDistribution:
    return JumpSizeDistribution(
        "custom_table",
        table_z=tuple(float(v) for v in z),
        table_density=tuple(float(v) for v in density),
    )


def jump_dist_from_dict(spec: dict | None) -> JumpSizeDistribution:
    if spec is None:
        return standard_gaussian()
    spec = dict(spec)
    kind = spec.pop("kind", "standard_gaussian")
    if kind == "standard_gaussian":
        return standard_gaussian()
    if kind == "uniform_symmetric":
        return uniform_symmetric(spec["a"])
    if kind == "custom_table":
        return custom_table(spec["z"], spec["density"])
    raise ValueError(f"unknown jump-size distribution {kind!r}")


def _normalized_table(z, p):
    z = np.asarray(z, dtype=float)
    p = np.asarray(p, dtype=float)
    if z.ndim != 1 or z.shape != p.shape or z.size < 2:
        raise ValueError("custom table needs matching 1-D z and density arrays with >= 2 points")
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(p))):
        raise ValueError("custom table diverges: non-finite entries")
    if np.any(np.diff(z) <= 0):
        raise ValueError("custom table z grid must be strictly increasing")
    if np.any(p < 0):
        raise ValueError("custom table density must be nonnegative")
    mass = np.sum(0.5 * (p[1:] + p[:-1]) * np.diff(z))
    if not (mass > 0 and math.isfinite(mass)):
        raise ValueError("custom table density has no finite positive mass")
    return z, p / mass


def _segment_moment(z: np.ndarray, p: np.ndarray, order: int) -> float:
    """Exact integral of z**order against the piecewise-linear density."""
    z0, z1 = z[:-1], z[1:]
    p0, p1 = p[:-1], p[1:]
    slope = (p1 - p0) / (z1 - z0)
    c0 = p0 - slope * z0
    # integral of (c0 + slope z) z^order over [z0, z1]
    k = order
    part = c0 * (z1 ** (k + 1) - z0 ** (k + 1)) / (k + 1) + slope * (z1 ** (k + 2) - z0 ** (k + 2)) / (k + 2)
    return float(np.sum(part))


def _table_inverse_cdf(z: np.ndarray, p: np.ndarray, u: np.ndarray) -> np.ndarray:
    dz = np.diff(z)
    seg_mass = 0.5 * (p[1:] + p[:-1]) * dz
    cdf = np.concatenate([[0.0], np.cumsum(seg_mass)])
    cdf /= cdf[-1]
    u = np.asarray(u, dtype=float)
    idx = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, len(dz) - 1)
    r = u - cdf[idx]
    p0 = p[idx]
    a = 0.5 * (p[idx + 1] - p0) / dz[idx]
    # root of a s^2 + p0 s = r in the cancellation-free form
    with np.errstate(divide="ignore", invalid="ignore"):
        s = 2.0 * r / (p0 + np.sqrt(np.maximum(p0 * p0 + 4.0 * a * r, 0.0)))
    s = np.where(np.isfinite(s), s, 0.0)
    return z[idx] + np.clip(s, 0.0, dz[idx])


def second_moment(dist: JumpSizeDistribution) -> float:
    """E[Z^2] of one jump-size component."""
    if dist.kind == "standard_gaussian":
        return 1.0
    if dist.kind == "uniform_symmetric":
        return dist.scale**2 / 3.0
    z, p = _normalized_table(dist.table_z, dist.table_density)
    m2 = _segment_moment(z, p, 2)
    if not math.isfinite(m2):
        raise ValueError("custom table second moment diverges")
    return m2


def wiener_increment(rng: np.random.Generator, d: int, h: float) -> np.ndarray:
    """d i.i.d. N(0, h) components."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    return rng.standard_normal(d) * math.sqrt(h)


def compound_poisson_batch(
    rng: np.random.Generator,
    lambda_: float,
    h: float,
    d: int,
    dist: JumpSizeDistribution,
    count_rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Jump sizes arriving in one step: K ~ Poisson(lambda h) rows of shape (K, d).

    Arrival times inside the step are not sampled; the Euler scheme only
    needs the sum of the sizes.  ``count_rng`` draws K when given, so that
    counts and sizes can come from separate streams.
    """
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    if not lambda_ >= 0:
        raise ValueError(f"jump intensity must be nonnegative, got {lambda_}")
    k = int((count_rng or rng).poisson(lambda_ * h))
    return dist.sample(rng, (k, d))


class NoiseSource:
    """Per-run generator of Euler increments, drawn a chunk of steps at a time.

    ``draw(k0, n)`` returns ``(dW, S)`` for steps ``k0 .. k0+n-1``: the Wiener
    increments, ``(n, N, d)`` or ``(n, 1, d)`` when shared, and the summed
    jump sizes ``(n, N, d)``.  Calls must be sequential (``k0`` equal to the
    number of steps drawn so far).
    """

    def __init__(self, run_seed: int, n_particles: int, dim: int, h: float, *,
                 jumps: bool, common_wiener: bool = False, common_poisson: bool = False,
                 intensity=None, dist: JumpSizeDistribution | None = None):
        self.n = n_particles
        self.d = dim
        self.h = h
        self.jumps = jumps
        self.common_wiener = common_wiener
        self.common_poisson = common_poisson
        self.intensity = intensity
        self.dist = dist or standard_gaussian()
        self._wiener = channel_stream(run_seed, "wiener").generator()
        self._count = channel_stream(run_seed, "poisson_count").generator()
        self._size = channel_stream(run_seed, "jump_size").generator()
        self._sqrt_h = math.sqrt(h)
        self._next = 0

    def draw(self, k0: int, n_steps: int):
        if k0 != self._next:
            raise RuntimeError(f"noise drawn out of order: expected step {self._next}, got {k0}")
        self._next = k0 + n_steps
        nw = 1 if self.common_wiener else self.n
        dW = self._wiener.standard_normal((n_steps, nw, self.d)) * self._sqrt_h
        S = np.zeros((n_steps, self.n, self.d))
        if self.jumps:
            t = (k0 + np.arange(n_steps)) * self.h
            lam_h = np.asarray(self.intensity(t), dtype=float) * self.h
            if self.common_poisson:
                counts = np.broadcast_to(self._count.poisson(lam_h[:, None], (n_steps, 1)), (n_steps, self.n))
            else:
                counts = self._count.poisson(lam_h[:, None], (n_steps, self.n))
            total = int(counts.sum())
            if total:
                z = self.dist.sample(self._size, (total, self.d))
                owner = np.repeat(np.arange(n_steps * self.n), counts.ravel())
                np.add.at(S.reshape(-1, self.d), owner, z)
        return dW, S


class CoupledNoise:
    """Coarse-grid increments aggregated from a finer :class:`NoiseSource`.

    Each coarse step covers ``factor`` fine steps; its Wiener increment and
    jump sum are the sums over the contained fine steps, so trajectories on
    different grids share one realisation of the driving noise.
    """

    def __init__(self, fine: NoiseSource, factor: int):
        if factor < 1 or int(factor) != factor:
            raise ValueError(f"refinement factor must be a positive integer, got {factor}")
        self.fine = fine
        self.factor = int(factor)

    def draw(self, k0: int, n_steps: int):
        m = self.factor
        dW, S = self.fine.draw(k0 * m, n_steps * m)
        dW = dW.reshape(n_steps, m, *dW.shape[1:]).sum(axis=1)
        S = S.reshape(n_steps, m, *S.shape[1:]).sum(axis=1)
        return dW, S
