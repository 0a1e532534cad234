import json

import numpy as np
import pytest

from jumpcbo import config, harness
from jumpcbo.schedules import Constant


def test_toml_run_config(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("""
schema_version = 1
[run]
variant = { tag = "jump_cbo_common_poisson", sqrt2_in_diffusion = false }
n_particles = 7
horizon = 2.0
step = 0.05
init_box = [-1.0, 3.0]
objective = { name = "rosenbrock", dimension = 5 }
schedules = { preset = "rosenbrock-exp2-a20", alpha = 25.0 }
jump_dist = { kind = "uniform_symmetric", a = 2.0 }
""")
    cfg = config.load_run_config(p)
    assert cfg.variant.tag == "jump_cbo_common_poisson" and not cfg.variant.sqrt2_in_diffusion
    assert cfg.n_steps == 40 and cfg.schedules.alpha == 25.0 and cfg.schedules.lambda_ == Constant(90.0)
    assert cfg.jump_dist.kind == "uniform_symmetric"
    lo, hi = cfg.bounds
    assert np.all(lo == -1) and np.all(hi == 3)


def test_json_and_round_trip(tmp_path):
    spec = harness.table_spec("table1", scale="desk")
    cfg = spec.cell_config(spec.variants[2], 50)
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"schema_version": 1, "run": cfg.to_dict()}))
    back = config.load_run_config(p)
    assert back.to_dict() == cfg.to_dict()


def test_schema_and_key_errors(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("schema_version = 2\n[run]\n")
    with pytest.raises(config.ConfigError):
        config.load_document(p)
    p.write_text("schema_version = 1\n")
    with pytest.raises(config.ConfigError):
        config.load_run_config(p)
    with pytest.raises(config.ConfigError):
        config.run_config_from_dict({"n_particles": 3})
    with pytest.raises(config.ConfigError):
        config.run_config_from_dict({"objective": {"name": "rastrigin", "dimension": 2}, "schedules": {"beta": 1, "sigma": 1},
                                     "n_particles": 3, "horizon": 1.0, "colour": "red"})
    with pytest.raises(config.ConfigError):
        config.run_config_from_dict({"objective": {"name": "ackley", "dimension": 2}, "schedules": {"beta": 1, "sigma": 1},
                                     "n_particles": 3, "horizon": 1.0})
    p.write_text("not = [valid")
    with pytest.raises(config.ConfigError):
        config.load_document(p)
    with pytest.raises(config.ConfigError):
        config.load_document(tmp_path / "missing.toml")


def test_shipped_configs_parse():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    doc = config.load_document(root / "quadratic_experiment.toml")
    spec = harness.ExperimentSpec.from_dict({**doc["experiment"], "run": doc["run"]})
    assert spec.n_runs == 40
    assert config.load_run_config(root / "rastrigin_single.toml").dimension == 20
