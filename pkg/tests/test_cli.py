import json
import os

import pytest

from elastoscat.cli import main, validate_config, ConfigError


def write(tmp_path, name, cfg):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run(tmp_path, cfg, out="out", *extra):
    return main(["--config", write(tmp_path, "cfg.json", cfg), "--out", str(tmp_path / out), "--quiet", *extra])


def test_dry_run_prints_plan(tmp_path, capsys):
    assert run(tmp_path, {"command": "sweep"}, "o", "--dry-run") == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["command"] == "sweep" and "config_hash" in plan
    assert not (tmp_path / "o").exists()


def test_schema_errors_exit_2(tmp_path, capsys):
    assert run(tmp_path, {"command": "nope"}) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2
    assert run(tmp_path, {"command": "foldy", "medium": {"mu": -1}}) == 2
    assert run(tmp_path, {"command": "foldy", "colour": "red"}) == 2
    assert main(["--config", str(tmp_path / "missing.json")]) == 2


def test_infeasible_distribution_exit_4(tmp_path, capsys):
    cfg = {"command": "foldy", "shape": {"builtin": "sphere", "level": 1}, "distribution": {"a": 0.001, "t": 0.2}}
    assert run(tmp_path, cfg) == 4
    err = json.loads(capsys.readouterr().err)
    assert "packing bound" in err["message"]


def test_capacitance_cache_and_idempotence(tmp_path, capsys):
    cfg = {"command": "capacitance", "shape": {"builtin": "sphere", "level": 2}, "cache_dir": str(tmp_path / "cache")}
    assert run(tmp_path, cfg, "a") == 0
    first = (tmp_path / "a" / "capacitance.json").read_bytes()
    mtime = os.path.getmtime(tmp_path / "a" / "capacitance.json")
    assert run(tmp_path, cfg, "a") == 0
    assert (tmp_path / "a" / "capacitance.json").read_bytes() == first
    assert os.path.getmtime(tmp_path / "a" / "capacitance.json") == mtime
    # a fresh output directory reuses the shared cache: byte-identical result
    main(["--config", write(tmp_path, "c.json", cfg), "--out", str(tmp_path / "b")])
    assert "cache hit" in capsys.readouterr().err
    assert (tmp_path / "b" / "capacitance.json").read_bytes() == first
    rec = json.loads(first)
    assert rec["config_hash"] and rec["version"]


def test_seed_override_changes_hash(tmp_path):
    cfg = validate_config({"command": "foldy"})
    assert validate_config({"command": "foldy"}, seed=5)["distribution"]["seed"] == 5
    assert cfg["distribution"]["seed"] == 0


def test_foldy_outputs(tmp_path):
    cfg = {"command": "foldy", "shape": {"builtin": "sphere", "level": 1}, "distribution": {"a": 0.004, "seed": 2}}
    assert run(tmp_path, cfg) == 0
    out = tmp_path / "out"
    lines = (out / "farfield.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert len(lines) == 2 + 26
    summary = json.loads((out / "foldy.json").read_text())
    assert summary["residual"] <= 1e-10 and summary["M"] == 250


def test_effective_and_scenario(tmp_path):
    cfg = {"command": "effective", "grid": {"n": 6}, "effective": {"c0": 2.0, "rho": 1.5}}
    assert run(tmp_path, cfg, "e") == 0
    assert (tmp_path / "e" / "volume_field.csv").exists()
    cfg = {"command": "scenario", "scenario": {"name": "negative_density", "params": {"n": 6}}}
    assert run(tmp_path, cfg, "s") == 0
    rep = json.loads((tmp_path / "s" / "scenario_negative_density.json").read_text())
    assert rep["negative_definite"]


def test_sweep_report_has_slope(tmp_path):
    cfg = {
        "command": "sweep",
        "shape": {"builtin": "sphere", "level": 1},
        "sweep": {"a_values": [0.03125, 0.015625, 0.0078125, 0.00390625], "ls_levels": [8, 16, 32]},
    }
    assert run(tmp_path, cfg) == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert "slope" in rep and rep["config_hash"]


def test_validate_rejects_bad_directions():
    with pytest.raises(ConfigError):
        validate_config({"command": "foldy", "directions": "sphere"})
