import functools
import json
import re

import numpy as np
import pytest

import zapp.oracles
from zapp.cli import EXIT_CONFIG, EXIT_INTERNAL, EXIT_OK, EXIT_SELFTEST, main
from zapp.config import ConfigError, ExperimentConfig, load_config
from zapp.metrics import MetricsTable

SMOKE = {
    "variant": "zapp",
    "scenes": 1,
    "seed": 3,
    "simulator": {"n_agents": 2, "goal_distance": 8.0, "spawn_x": [5.0, 14.0]},
}


def write(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return p


def without_wall_clock(text):
    # solve times are measured, everything else must be reproducible
    return re.sub(r'"solve_time": [0-9.e+-]+', '"solve_time": _', text)


# -- config ------------------------------------------------------------------------


def test_defaults_and_variant_flags():
    cfg = ExperimentConfig.from_dict({"variant": "discrete-baseline"})
    assert cfg.scenes == 30 and cfg.seeds[:2] == [0, 1]
    assert not cfg.planner.continuous and cfg.planner.interaction
    cfg = ExperimentConfig.from_dict({"variant": "zapp-no-interaction", "name": "noint"})
    assert cfg.label == "noint" and not cfg.planner.interaction


def test_config_round_trip():
    cfg = ExperimentConfig.from_dict(SMOKE)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("data, match", [
    ({"variant": "mats"}, "variant"),
    ({"bogus": 1}, "unknown"),
    ({"planner": {"horizon": 16, "typo": 1}}, "unknown"),
    ({"simulator": {"forces": {"agent_gain": "x"}}}, "number"),
    ({"planner": {"max_outer": 11}}, "max_outer"),
    ({"simulator": {"dt_sim": 0.05}}, "dt_sim"),
    ({"simulator": {"dt_sim": 0.015}}, "multiple"),
    ({"scenes": 0}, "scenes"),
    ({"scenes": 1.5}, "integer"),
    ({"planner": {"continuous": 1}}, "boolean"),
    ([], "object"),
])
def test_invalid_configs(data, match):
    with pytest.raises(ConfigError, match=match):
        ExperimentConfig.from_dict(data)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(write(tmp_path, "bad.json", "{not json"))


# -- cli ----------------------------------------------------------------------------


def test_malformed_config_exits_1_without_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", str(write(tmp_path, "bad.json", {"variant": "zapp", "extra": 1})), "--out", str(out)])
    assert code == EXIT_CONFIG
    assert not out.exists()
    assert "unknown" in capsys.readouterr().err


def test_bad_jobs_flag(tmp_path):
    assert main(["run", str(write(tmp_path, "c.json", SMOKE)), "--jobs", "0"]) == EXIT_CONFIG


def test_run_writes_outputs_and_reruns_deterministically(tmp_path):
    cfg = write(tmp_path, "smoke.json", SMOKE)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == EXIT_OK
    table = MetricsTable.from_csv((out / "metrics.csv").read_text())
    assert len(table) == 1 and table.rows[0].variant == "zapp"
    assert (out / "metrics.txt").read_text().startswith("variant")
    log = out / "episodes" / "seed_000003.jsonl"
    svg = out / "plots" / "seed_000003.svg"
    first_log, first_svg = log.read_text(), svg.read_bytes()
    assert first_svg.lstrip().startswith(b"<?xml")
    assert main(["run", str(cfg), "--out", str(out)]) == EXIT_OK
    assert without_wall_clock(log.read_text()) == without_wall_clock(first_log)
    assert svg.read_bytes() == first_svg


def test_seed_override_and_no_plots(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(write(tmp_path, "c.json", SMOKE)), "--out", str(out), "--seed", "11", "--no-plots"]) == 0
    assert (out / "episodes" / "seed_000011.jsonl").exists()
    assert not (out / "plots").exists()


def test_compare_against_itself(tmp_path):
    a = write(tmp_path, "a.json", SMOKE)
    out = tmp_path / "cmp"
    assert main(["compare", str(a), str(a), "--out", str(out), "--no-plots"]) == EXIT_OK
    rows = MetricsTable.from_csv((out / "compare.csv").read_text()).rows
    assert len(rows) == 2 and rows[0].variant != rows[1].variant
    for field in ("goals_pct", "crashes_pct", "avg_speed_mean", "avg_speed_std"):
        assert getattr(rows[0], field) == getattr(rows[1], field) or (
            np.isnan(getattr(rows[0], field)) and np.isnan(getattr(rows[1], field)))


def test_compare_rejects_mismatched_seeds_and_single_config(tmp_path):
    a = write(tmp_path, "a.json", SMOKE)
    b = write(tmp_path, "b.json", {**SMOKE, "seed": 4})
    assert main(["compare", str(a), str(b), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert main(["compare", str(a), "--out", str(tmp_path / "y")]) == EXIT_CONFIG
    assert not (tmp_path / "x").exists()


def test_internal_error_exits_2(tmp_path, monkeypatch):
    import zapp.experiment

    def boom(*a, **k):
        raise RuntimeError("simulated failure")

    monkeypatch.setattr(zapp.experiment, "run_experiment", boom)
    assert main(["run", str(write(tmp_path, "c.json", SMOKE)), "--out", str(tmp_path / "o")]) == EXIT_INTERNAL


def test_selftest_passes(capsys):
    assert main(["selftest", "--scale", "0.2"]) == EXIT_OK
    assert "selftest passed" in capsys.readouterr().out


def test_selftest_detects_gradient_bug(monkeypatch, capsys):
    def buggy(batch, z):
        vals, J = batch.values_and_grads(z)
        J = J.copy()
        J[:, 0] *= -1.0
        return vals, J

    monkeypatch.setattr(zapp.oracles, "run_selftest", functools.partial(zapp.oracles.run_selftest, grad_fn=buggy))
    assert main(["selftest", "--scale", "0.2"]) == EXIT_SELFTEST
    out = capsys.readouterr().out
    assert "[FAIL] finite-difference gradients" in out
