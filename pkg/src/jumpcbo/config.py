"""Config documents (TOML or JSON, schema version 1) and their dict forms.

A document looks like::

    schema_version = 1

    [run]
    variant = "jump_cbo"
    n_particles = 50
    horizon = 100.0
    step = 0.01
    init_box = [-6.0, 6.0]
    objective = { name = "rastrigin", dimension = 20 }
    schedules = { preset = "rastrigin-exp1-a30" }

    [experiment]
    variants = ["anisotropic_cbo", "jump_cbo"]
    repetitions = 100
    n_particles_grid = [20, 50, 80, 100]

Every ``to_dict`` output in the package is accepted back by the matching
parser here, so reports can be re-run from their embedded config.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from . import objective as objective_mod
from .dynamics import ModelVariant, RunConfig
from .schedules import ScheduleSet
from .stochastic import jump_dist_from_dict

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1

_RUN_KEYS = {"variant", "sqrt2_in_diffusion", "schedules", "objective", "n_particles", "horizon",
             "step", "init_box", "master_seed", "jump_dist", "snapshot_stride"}


class ConfigError(ValueError):
    """Malformed or unsupported config document."""


def load_document(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix.lower() == ".json":
            doc = json.loads(text)
        else:
            doc = tomllib.loads(text.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"config schema_version must be {SCHEMA_VERSION}, got {version!r}")
    return doc


def variant_from_spec(spec, sqrt2: bool | None = None) -> ModelVariant:
    if isinstance(spec, str):
        spec = {"tag": spec}
    spec = dict(spec)
    if sqrt2 is not None:
        spec["sqrt2_in_diffusion"] = sqrt2
    try:
        return ModelVariant.from_dict(spec)
    except TypeError as exc:
        raise ConfigError(f"bad variant entry: {exc}") from None


def run_config_from_dict(spec: dict) -> RunConfig:
    spec = dict(spec)
    unknown = set(spec) - _RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown run keys: {sorted(unknown)}")
    for key in ("objective", "schedules", "n_particles", "horizon"):
        if key not in spec:
            raise ConfigError(f"run config is missing {key!r}")
    try:
        variant = variant_from_spec(spec.get("variant", "jump_cbo"), spec.get("sqrt2_in_diffusion"))
        kw = {k: spec[k] for k in ("step", "master_seed", "snapshot_stride") if k in spec}
        if "init_box" in spec:
            lo, hi = spec["init_box"]
            kw["init_box"] = (lo, hi)
        return RunConfig(
            variant=variant,
            schedules=ScheduleSet.from_dict(spec["schedules"]),
            objective=objective_mod.from_dict(spec["objective"]),
            n_particles=int(spec["n_particles"]),
            horizon=float(spec["horizon"]),
            jump_dist=jump_dist_from_dict(spec.get("jump_dist")),
            **kw,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid run config: {exc}") from None


def load_run_config(path: str | Path) -> RunConfig:
    doc = load_document(path)
    if "run" not in doc:
        raise ConfigError("config has no [run] table")
    return run_config_from_dict(doc["run"])
