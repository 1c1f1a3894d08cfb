import json

import numpy as np
import pytest
import yaml

from hartree_control.cli import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, main
from hartree_control.config import ConfigError, load_config
from hartree_control.io import atomic_dir, read_csv, write_csv

SMALL = {
    "grid": {"X": 15, "n_points": 301},
    "time": {"T": 0.5, "dt": 0.005},
    "solver": {"n_modes": 32},
    "noncontrol": {"N_list": [2, 3], "kinds": ["interior"], "n_modes": 32, "cg_max_iter": 5, "n_probe": 8},
}


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(yaml.safe_dump(SMALL))
    return p


def test_config_defaults_and_strictness(tmp_path):
    cfg = load_config(None, {"subcommand": "control"})
    assert cfg.grid.n_points % 2 == 1 and cfg.time.dt == 5e-4
    bad = tmp_path / "bad.yaml"
    bad.write_text("grid: {n_points: 100}\n")
    with pytest.raises(ConfigError):
        load_config(bad, {"subcommand": "control"})


def test_csv_roundtrip_is_exact(tmp_path):
    vals = [[1, 0.1 + 0.2, np.pi], [2, 1e-300, -0.0]]
    write_csv(tmp_path / "a.csv", ["k", "x", "y"], vals)
    rows = read_csv(tmp_path / "a.csv")
    assert float(rows[0]["x"]) == 0.1 + 0.2 and float(rows[0]["y"]) == np.pi


def test_atomic_dir_leaves_nothing_on_error(tmp_path):
    out = tmp_path / "out"
    with pytest.raises(RuntimeError):
        with atomic_dir(out) as d:
            (d / "partial.csv").write_text("x")
            raise RuntimeError
    assert not out.exists()


def test_basis_subcommand(tmp_path):
    assert main(["basis", "--n", "5", "--out", str(tmp_path / "b")]) == EXIT_OK
    rows = read_csv(tmp_path / "b" / "basis.csv")
    assert len(rows) == 5 and float(rows[0]["lambda_N"]) == pytest.approx(1.01879297, abs=1e-8)
    assert [r["parity"] for r in rows[:2]] == ["even", "odd"]
    man = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert man["status"] == "ok" and "basis.csv" in man["artifacts"]


def test_invalid_input_exit_code(tmp_path, small_cfg):
    assert main(["basis", "--n", "0", "--out", str(tmp_path / "x")]) == EXIT_INVALID
    with pytest.raises(SystemExit) as info:
        main(["control", "--seed", "abc", "--out", str(tmp_path / "x")])
    assert info.value.code == EXIT_INVALID
    assert not (tmp_path / "x").exists()


def test_numerical_failure_keeps_data(tmp_path, small_cfg):
    out = tmp_path / "nc"
    assert main(["noncontrol-scan", "--config", str(small_cfg), "--out", str(out)]) == EXIT_NUMERICAL
    rows = read_csv(out / "cost_scan.csv")
    assert len(rows) == 2 and all(r["converged"] == "false" for r in rows)
    assert json.loads((out / "manifest.json").read_text())["status"] == "numerical_failure"


def test_env_overrides_and_flag_precedence(tmp_path, small_cfg, monkeypatch):
    monkeypatch.setenv("HARTREE_CONTROL_CONFIG", str(small_cfg))
    monkeypatch.setenv("HARTREE_CONTROL_OUT", str(tmp_path / "env"))
    monkeypatch.setenv("HARTREE_CONTROL_SEED", "5")
    assert main(["evolve", "--seed", "9"]) == EXIT_OK
    man = json.loads((tmp_path / "env" / "manifest.json").read_text())
    assert man["config"]["seed"] == 9 and man["config"]["grid"]["n_points"] == 301


def test_control_artifacts(tmp_path, small_cfg):
    out = tmp_path / "c"
    assert main(["control", "--config", str(small_cfg), "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["target_error"] < 1e-6
    assert {"u.csv", "h.csv", "norms.csv", "v0.csv"} <= {p.name for p in out.iterdir()}
