import json
import os

import pytest

import pmelab as pl
from pmelab.cli import (
    bundled_scenario_path,
    main,
    parse_config,
    run_scenario,
    serialize_config,
)
from pmelab.errors import ConfigurationError

MINIMAL = '{"coefficients": {"preset": "linear-heat"}}'

CHEAP = {
    "name": "cheap",
    "coefficients": {"preset": "cubic-tanh"},
    "mesh": {"x_min": -8.0, "x_max": 8.0, "n_cells": 120},
    "initial": {"kind": "gaussian", "mean": 0.0, "sd": 0.5},
    "solver": {"dt": 0.005, "T": 0.1, "checkpoint_times": [0.0, 0.05, 0.1]},
    "particles": {"n": 400, "seed": 5, "mode": "decoupled"},
    "experiments": [
        {"type": "superposition", "tolerance": 0.2},
        {"type": "weak_form_residual", "center": 0.0, "radius": 2.0, "t": "T", "max_residual": 0.05},
    ],
}


def test_minimal_config_fills_documented_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.coefficients.preset == "linear-heat"
    assert cfg.mesh == pl.Mesh(-8.0, 8.0, 400)
    assert cfg.solver.dt == 1e-3 and cfg.solver.T == 0.5
    assert len(cfg.solver.checkpoint_times) == 11
    assert cfg.particles.n == 10_000 and cfg.particles.mode == "decoupled"
    assert cfg.initial.kind == "gaussian"
    assert cfg.experiments == ()


def test_mesh_invariant_is_a_configuration_error():
    doc = '{"coefficients": {"preset": "linear-heat"}, "mesh": {"n_cells": 2}}'
    with pytest.raises(ConfigurationError, match="mesh"):
        parse_config(doc)


def test_unknown_key_is_named():
    doc = '{"coefficients": {"preset": "linear-heat"}, "foo": 1}'
    with pytest.raises(ConfigurationError, match="foo"):
        parse_config(doc)
    doc = '{"coefficients": {"preset": "linear-heat", "bar": 2}}'
    with pytest.raises(ConfigurationError, match="bar"):
        parse_config(doc)


def test_malformed_json_reports_location():
    with pytest.raises(ConfigurationError, match="line"):
        parse_config('{"coefficients": ')


def test_unknown_preset_rejected_at_parse_time():
    with pytest.raises(ConfigurationError, match="unknown preset"):
        parse_config('{"coefficients": {"preset": "nope"}}')


def test_round_trip_of_bundled_scenarios():
    for name in ("heat-superposition.json", "cubic-full.json"):
        with open(bundled_scenario_path(name), encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
        again = parse_config(serialize_config(cfg))
        assert again == cfg


def test_round_trip_of_inline_coefficients():
    doc = json.dumps(
        {
            "coefficients": {
                "beta_powers": [1.0, 0.0, 0.5],
                "gamma0": 1.0,
                "rate": "rational",
                "drift": "neg_tanh",
                "lipschitz_a_local": 5.0,
            },
            "solver": {"dt": 0.001, "T": 0.1, "n_checkpoints": 3},
        }
    )
    cfg = parse_config(doc)
    assert cfg.coefficients.preset is None
    assert parse_config(serialize_config(cfg)) == cfg
    built = cfg.coefficients.build()
    assert built.gamma0 == 1.0


def test_run_scenario_is_reproducible(tmp_path):
    doc = json.dumps(CHEAP)
    cfg = parse_config(doc)
    s1 = run_scenario(cfg, output_dir=str(tmp_path / "a"))
    s2 = run_scenario(cfg, output_dir=str(tmp_path / "b"))
    assert s1.all_passed and s2.all_passed
    for fname in ("trajectory.csv", "monitors.csv", "ensemble.csv",
                  "superposition.csv", "weak_form.csv"):
        fa = (tmp_path / "a" / fname).read_bytes()
        fb = (tmp_path / "b" / fname).read_bytes()
        assert fa == fb, fname
    keep = lambda text: [ln for ln in text.splitlines() if not ln.startswith("generated_at:")]
    assert keep((tmp_path / "a" / "summary.txt").read_text()) == keep(
        (tmp_path / "b" / "summary.txt").read_text()
    )


def test_failing_experiment_gives_exit_code_one(tmp_path):
    doc = dict(CHEAP)
    doc["experiments"] = [{"type": "superposition", "tolerance": 1e-9}]
    cfg_path = tmp_path / "fail.json"
    cfg_path.write_text(json.dumps(doc))
    code = main(["run", str(cfg_path), "--output-dir", str(tmp_path / "out")])
    assert code == 1
    summary = (tmp_path / "out" / "summary.txt").read_text()
    assert "FAIL" in summary


def test_cfl_violation_exits_with_config_error(tmp_path, capsys):
    # dx = 16/120, so dt = 0.15 pushes dt*sup|E b|/dx above 1 for cubic-tanh
    doc = dict(CHEAP)
    doc["solver"] = {"dt": 0.15, "T": 0.3, "checkpoint_times": [0.0, 0.15, 0.3]}
    doc["experiments"] = []
    cfg_path = tmp_path / "cfl.json"
    cfg_path.write_text(json.dumps(doc))
    code = main(["run", str(cfg_path), "--output-dir", str(tmp_path / "out")])
    assert code == 2
    assert "CFL" in capsys.readouterr().err
    assert "CFL" in (tmp_path / "out" / "summary.txt").read_text()


def test_validate_subcommand(tmp_path, capsys):
    cfg_path = tmp_path / "ok.json"
    cfg_path.write_text(MINIMAL)
    assert main(["validate", str(cfg_path)]) == 0
    assert "ok" in capsys.readouterr().out
    bad = tmp_path / "bad.json"
    bad.write_text('{"coefficients": {"preset": "linear-heat"}, "oops": 1}')
    assert main(["validate", str(bad)]) == 2


def test_missing_config_file_is_a_config_error(capsys):
    assert main(["run", "/nonexistent/path.json"]) == 2


def test_presets_subcommand(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    for name in pl.PRESET_NAMES:
        assert name in out


def test_experiment_artifacts_listed_once(tmp_path):
    cfg = parse_config(json.dumps(CHEAP))
    summary = run_scenario(cfg, output_dir=str(tmp_path / "o"))
    names = [e.name for e in summary.experiments]
    assert names == ["superposition", "weak_form_residual"]
    for artifact in summary.artifacts:
        assert os.path.exists(artifact)


def test_jobs_flag_gives_identical_results(tmp_path):
    cfg = parse_config(json.dumps(CHEAP))
    s1 = run_scenario(cfg, output_dir=str(tmp_path / "seq"), jobs=1)
    s2 = run_scenario(cfg, output_dir=str(tmp_path / "par"), jobs=2)
    assert [e.detail for e in s1.experiments] == [e.detail for e in s2.experiments]
    for fname in ("superposition.csv", "weak_form.csv"):
        assert (tmp_path / "seq" / fname).read_bytes() == (tmp_path / "par" / fname).read_bytes()
