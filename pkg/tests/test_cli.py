"""CLI and experiment-runner tests: schema, outputs, determinism, exit codes."""

import json

import pytest

from jumplab.cli import config_hash, main, run, validate_config
from jumplab.errors import ConfigError


def _write_config(tmp_path, cfg, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


SOLVE_CFG = {
    "kind": "solve",
    "kernel": {"family": "zero", "dimension": 2},
    "domain": {"shape": "ball", "center": [0.0, 0.0], "radius": 1.0},
    "f": "1",
    "g": "0",
    "x0": [[0.0, 0.0]],
    "n_paths": 400,
    "dt": 2e-3,
    "t_max": 3.0,
    "seed": 5,
}


def test_empty_config_names_first_missing_field():
    with pytest.raises(ConfigError, match="kind"):
        validate_config({})


def test_missing_field_named():
    with pytest.raises(ConfigError, match="domain"):
        validate_config({"kind": "solve", "kernel": {"family": "zero", "dimension": 1},
                         "n_paths": 10, "dt": 1e-3, "t_max": 1.0})


def test_unknown_kind_rejected():
    with pytest.raises(ConfigError, match="unknown experiment kind"):
        validate_config({"kind": "frobnicate"})


def test_bad_kernel_spec_rejected():
    with pytest.raises(ConfigError, match="invalid kernel"):
        validate_config({"kind": "validate-kernel",
                         "kernel": {"family": "fractional", "dimension": 1, "s": 7}})


def test_solve_run_writes_outputs(tmp_path):
    code = run(SOLVE_CFG, str(tmp_path / "out"), quiet=True)
    assert code == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["kind"] == "solve"
    assert summary["seed"] == 5
    assert summary["config_hash"] == config_hash(SOLVE_CFG)
    assert "package_version" in summary
    est = summary["estimates"][0]
    assert 0.1 < est["mean"] < 0.4
    csv = (tmp_path / "out" / "solve.csv").read_text()
    assert csv.splitlines()[0] == "x1,x2,mean,std_error,censored_count"


def test_rerun_byte_identical(tmp_path):
    run(SOLVE_CFG, str(tmp_path / "a"), quiet=True)
    run(SOLVE_CFG, str(tmp_path / "b"), quiet=True)
    assert (tmp_path / "a" / "summary.json").read_bytes() == \
        (tmp_path / "b" / "summary.json").read_bytes()
    assert (tmp_path / "a" / "solve.csv").read_bytes() == \
        (tmp_path / "b" / "solve.csv").read_bytes()


def test_worker_count_does_not_change_outputs(tmp_path):
    cfg2 = dict(SOLVE_CFG)
    cfg2["workers"] = 2
    run(SOLVE_CFG, str(tmp_path / "w1"), quiet=True)
    run(cfg2, str(tmp_path / "w2"), quiet=True)
    assert (tmp_path / "w1" / "summary.json").read_bytes() == \
        (tmp_path / "w2" / "summary.json").read_bytes()
    assert (tmp_path / "w1" / "solve.csv").read_bytes() == \
        (tmp_path / "w2" / "solve.csv").read_bytes()


def test_seed_override_changes_hash_and_data(tmp_path):
    run(SOLVE_CFG, str(tmp_path / "a"), quiet=True)
    code = run(SOLVE_CFG, str(tmp_path / "c"), seed=6, quiet=True)
    assert code == 0
    a = json.loads((tmp_path / "a" / "summary.json").read_text())
    c = json.loads((tmp_path / "c" / "summary.json").read_text())
    assert c["seed"] == 6
    assert a["config_hash"] != c["config_hash"]
    assert a["estimates"][0]["mean"] != c["estimates"][0]["mean"]


def test_validate_kernel_kind(tmp_path):
    cfg = {"kind": "validate-kernel",
           "kernel": {"family": "fractional", "dimension": 1, "s": 0.5}}
    code = run(cfg, str(tmp_path / "vk"), quiet=True)
    assert code == 0
    summary = json.loads((tmp_path / "vk" / "summary.json").read_text())
    assert summary["integrability_value"] == pytest.approx(4.0, rel=1e-9)
    assert summary["verdicts"]["a1_nondegenerate"]


def test_validate_kernel_divergent_exits_one(tmp_path):
    cfg = {"kind": "validate-kernel",
           "kernel": {"family": "fractional", "dimension": 1, "s": 1.0}}
    code = run(cfg, str(tmp_path / "vk"), quiet=True)
    assert code == 1
    summary = json.loads((tmp_path / "vk" / "summary.json").read_text())
    assert summary["verdicts"]["levy_integrable"] is False


def test_expression_error_exit_code(tmp_path):
    cfg = dict(SOLVE_CFG)
    cfg["f"] = "unknown_name(x1)"
    assert run(cfg, str(tmp_path / "bad"), quiet=True) == 2


def test_main_subcommands(tmp_path, capsys):
    assert main(["list-kernels"]) == 0
    assert "fractional" in capsys.readouterr().out
    assert main(["list-domains"]) == 0
    assert "ball" in capsys.readouterr().out
    cfg_path = _write_config(tmp_path, SOLVE_CFG)
    assert main(["validate", str(cfg_path)]) == 0
    assert main(["run", str(cfg_path), "--out", str(tmp_path / "cli_out"),
                 "--quiet"]) == 0
    assert (tmp_path / "cli_out" / "summary.json").exists()


def test_main_bad_config_exit_codes(tmp_path):
    missing = tmp_path / "missing.json"
    assert main(["run", str(missing), "--quiet"]) == 2
    bad = _write_config(tmp_path, {"kind": "nope"}, "bad.json")
    assert main(["run", str(bad), "--quiet"]) == 2
    notjson = tmp_path / "notjson.json"
    notjson.write_text("{oops")
    assert main(["validate", str(notjson)]) == 2


def test_hash_excludes_execution_keys():
    a = dict(SOLVE_CFG)
    b = dict(SOLVE_CFG)
    b["workers"] = 8
    b["output_dir"] = "/elsewhere"
    assert config_hash(a) == config_hash(b)


def test_survival_kind(tmp_path):
    cfg = {
        "kind": "survival",
        "kernel": {"family": "zero", "dimension": 1},
        "domain": {"shape": "interval", "a": -1.0, "b": 1.0},
        "n_paths": 300,
        "dt": 2e-3,
        "t_max": 1.0,
        "t_grid": [0.1, 0.3, 0.6, 1.0],
        "seed": 2,
    }
    assert run(cfg, str(tmp_path / "sv"), quiet=True) == 0
    lines = (tmp_path / "sv" / "survival.csv").read_text().splitlines()
    assert lines[0] == "t,s_hat,ci_lo,ci_hi"
    assert len(lines) == 5
    s_vals = [float(l.split(",")[1]) for l in lines[1:]]
    assert all(a >= b for a, b in zip(s_vals, s_vals[1:]))


def test_narrow_domain_kind(tmp_path):
    cfg = {
        "kind": "narrow-domain",
        "h": 0.05,
        "c_values": [20.0, 50.0],
        "widths": [0.3, 0.5, 0.7, 0.9],
        "seed": 0,
    }
    assert run(cfg, str(tmp_path / "nd"), quiet=True) == 0
    summary = json.loads((tmp_path / "nd" / "summary.json").read_text())
    assert summary["verdicts"]["threshold_decreases_in_c"]
    t20, t50 = summary["thresholds"]
    assert t50 < t20
