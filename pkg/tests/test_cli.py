import json
from pathlib import Path

import pytest

from bmeigen.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, payload, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return str(p)


def test_validate_operator_pucci(tmp_path):
    code = main(["validate-operator", "--config", str(CONFIGS / "validate_pucci.json"), "--out", str(tmp_path)])
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    c, C = rep["result"]["ellipticity"]["estimate"]
    assert 1 - 1e-9 <= c <= C <= 2 + 1e-9
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["seed"] == 0 and len(man["config_sha256"]) == 64 and "numpy" in man["versions"]


def test_bm_check_square_disc(tmp_path):
    code = main(["bm-check", "--config", str(CONFIGS / "bm_square_disc_p2.json"), "--out", str(tmp_path),
                 "--h", "0.03125"])
    assert code == 0
    rows = (tmp_path / "table.csv").read_text().strip().splitlines()
    assert len(rows) == 4
    assert rows[0].split(",")[:3] == ["config_sha256", "seed", "t"]


def test_missing_p_is_a_config_error(tmp_path, capsys):
    code = main(["eigen", "--config", str(CONFIGS / "broken_missing_p.json"), "--out", str(tmp_path)])
    assert code == 1
    assert "operator.p" in capsys.readouterr().err


def test_command_mismatch(tmp_path, capsys):
    code = main(["eigen", "--config", str(CONFIGS / "validate_pucci.json"), "--out", str(tmp_path)])
    assert code == 1 and "command" in capsys.readouterr().err


def test_failed_checks_exit_2(tmp_path):
    # a solver capped at two outer iterations cannot converge
    cfg = {"command": "eigen", "operator": {"kind": "p_laplacian", "p": 2},
           "domain": {"type": "disc", "radius": 1}, "h": 0.0625, "solver": {"max_outer": 2}}
    assert main(["eigen", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2


def test_resource_budget_exit_1(tmp_path, capsys):
    cfg = {"command": "minkowski", "operator": {"kind": "p_laplacian", "p": 2},
           "domains": [{"type": "disc", "radius": 1}, {"type": "square", "side": 1}], "weights": [0.5, 0.5],
           "h": 1e-4}
    assert main(["minkowski", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1
    assert "ResourceError" in capsys.readouterr().err


def test_reports_are_byte_identical(tmp_path):
    args = ["eigen", "--config", str(CONFIGS / "eigen_disc_p3.json"), "--h", "0.0625"]
    assert main(args + ["--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    for name in ("report.json", "u.f64", "table.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_format_and_grid_dump(tmp_path):
    code = main(["infconv", "--config", str(CONFIGS / "infconv_square_disc.json"), "--out", str(tmp_path),
                 "--h", "0.0625", "--format", "json"])
    assert code == 0
    assert (tmp_path / "w.json").exists() and (tmp_path / "w.f64").exists()
    assert not (tmp_path / "table.csv").exists() and not (tmp_path / "w.csv").exists()


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("BMEIGEN_THREADS", "1")
    assert main(["validate-operator", "--config", str(CONFIGS / "validate_pucci.json"), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["threads"] == 1
    monkeypatch.setenv("BMEIGEN_THREADS", "many")
    assert main(["validate-operator", "--config", str(CONFIGS / "validate_pucci.json"), "--out", str(tmp_path)]) == 1


def test_reproduce_operators_and_unknown_suite(tmp_path, capsys):
    assert main(["reproduce", "operators", "--out", str(tmp_path)]) == 0
    assert "[PASS] operator hypotheses" in capsys.readouterr().out
    assert main(["reproduce", "nonsense", "--out", str(tmp_path)]) == 1
