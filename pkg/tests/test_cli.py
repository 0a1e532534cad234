import json
from pathlib import Path

import pytest

from jumpcbo import cli, consensus

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _small_run(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text("""
schema_version = 1
[run]
n_particles = 10
horizon = 1.0
objective = { name = "quadratic", dimension = 2 }
schedules = { beta = 1.0, sigma = 0.5, gamma = 0.5, lambda = 1.0, alpha = 10.0 }
""")
    return p


def test_presets(capsys):
    assert cli.main(["presets"]) == 0
    assert "rastrigin-exp1-a30" in capsys.readouterr().out


def test_reproduce_dry_run(capsys):
    assert cli.main(["reproduce", "table2", "--dry-run"]) == 0
    out = capsys.readouterr().out
    assert "planned: 16 cells, 1600 runs" in out
    assert cli.main(["reproduce", "table3", "--dry-run", "--scale", "desk", "--sqrt2", "off"]) == 0
    out = capsys.readouterr().out
    assert "planned: 8 cells, 200 runs" in out and '"sqrt2_in_diffusion": false' in out


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["reproduce", "table9"])
    assert e.value.code == 2
    assert cli.main(["run"]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("schema_version = 3\n")
    assert cli.main(["run", "--config", str(bad)]) == 2


def test_run_single_and_overwrite(tmp_path, monkeypatch):
    cfg = _small_run(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
    payload = json.loads((out / "run.json").read_text())
    assert payload["config"]["master_seed"] == 3 and "terminal_f" in payload
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 2
    assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--force", "--sqrt2", "off"]) == 0
    assert json.loads((out / "run.json").read_text())["config"]["variant"]["sqrt2_in_diffusion"] is False
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["run", "--config", str(cfg)]) == 0
    assert (tmp_path / "env" / "run.json").exists()


def test_run_experiment_desk(tmp_path, capsys):
    out = tmp_path / "exp"
    code = cli.main(["run", "--config", str(CONFIGS / "quadratic_experiment.toml"), "--out", str(out),
                     "--workers", "1", "--scale", "desk"])
    assert code == 0
    summary = json.loads((out / "quadratic.json").read_text())
    assert summary["scale"] == "desk" and summary["cells"][0]["repetitions"] == 25
    assert (out / "quadratic_runs.csv").exists()


def test_study_meanfield(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text("""
schema_version = 1
[run]
n_particles = 10
horizon = 0.5
objective = { name = "quadratic", dimension = 1 }
schedules = { beta = 1.0, sigma = 0.5, gamma = 0.5, lambda = 1.0, alpha = 10.0 }
[study]
n_levels = [10, 20, 40]
paired_runs = 3
""")
    assert cli.main(["study", "meanfield", "--config", str(p), "--out", str(tmp_path)]) == 0
    payload = json.loads((tmp_path / "study_meanfield.json").read_text())
    assert [r["n_particles"] for r in payload["rows"]] == [10, 20, 40] and "config" in payload


def test_study_dry_run_and_conditions(tmp_path, capsys):
    assert cli.main(["study", "euler", "--dry-run"]) == 0
    assert "planned: 4 levels" in capsys.readouterr().out
    assert cli.main(["study", "conditions"]) == 2
    cfg = _small_run(tmp_path)
    assert cli.main(["study", "conditions", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert "eta" in json.loads((tmp_path / "study_conditions.json").read_text())


def test_validate_fast_passes(capsys):
    assert cli.main(["validate", "fast"]) == 0
    assert "10/10 checks passed" in capsys.readouterr().out


def test_validate_fast_catches_missing_stabilization(monkeypatch, capsys):
    monkeypatch.setattr(consensus, "_stabilizing_shift", lambda values: 0.0)
    assert cli.main(["validate", "fast"]) == 1
    out = capsys.readouterr().out
    assert "FAIL consensus shift invariance" in out and "[culprit: consensus stabilization]" in out
