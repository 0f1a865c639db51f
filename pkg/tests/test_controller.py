import importlib
import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest

import main as cli
from core.config_loader import load_config
from core.controller import EXIT_FAILED, EXIT_OK, EXIT_USAGE, RunContext, execute
from core.plugin_loader import discover_plugins

from conftest import const_pp, load_run_model, load_trajectory_csv, minimal_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SUBCOMMANDS = ["crosscheck", "grad", "gradcheck", "loja", "rates", "risk", "simulate", "witness"]


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def test_plugin_discovery():
    assert sorted(discover_plugins()) == SUBCOMMANDS


def test_simulate_c_only(tmp_path):
    assert execute("simulate", CONFIGS / "c_only.json", str(tmp_path), quiet=True) == EXIT_OK
    run = load_run_model(str(tmp_path / "simulate" / "seed0"))
    traj = run["trajectory"]
    assert traj["header"][:2] == ["t", "theta_1"] and traj["header"][-3:] == ["loss", "gnorm", "ndeg"]
    np.testing.assert_allclose(traj["loss"], np.exp(-4 * traj["t"]), atol=1e-7)
    assert np.all(traj["ndeg"] == 1)
    assert run["result"]["ok"] and run["result"]["checks"]["energy_identity"]
    assert run["events"]["events"] == [] and run["events"]["status"] == "t_max"
    assert run["resolved_config"]["solver"]["g_tol"] == 1e-10
    assert "failure_report" not in run


def test_risk_perfect_fit(tmp_path):
    assert execute("risk", CONFIGS / "perfect_fit.json", str(tmp_path), quiet=True) == EXIT_OK
    result = read_json(tmp_path / "risk" / "seed0" / "result.json")
    assert result["loss"] <= 1e-15
    assert result["loss_exact"] == 0.0


def test_simulate_degeneration_event(tmp_path):
    assert execute("simulate", CONFIGS / "degeneration.json", str(tmp_path), quiet=True, t_max=0.1) == EXIT_OK
    events = read_json(tmp_path / "simulate" / "seed0" / "events.json")["events"]
    assert [e["neuron"] for e in events] == [0]
    assert 0.002 < events[0]["t"] < 0.003
    ndeg = load_trajectory_csv(str(tmp_path / "simulate" / "seed0" / "trajectory.csv"))["ndeg"]
    assert np.all(np.diff(ndeg) >= 0)


def test_artifacts_deterministic(tmp_path):
    for name in ("a", "b"):
        assert execute("simulate", CONFIGS / "witness.json", str(tmp_path / name), quiet=True, t_max=1.0) == EXIT_OK
    for artifact in ("trajectory.csv", "events.json", "result.json", "resolved_config.json"):
        first = (tmp_path / "a" / "simulate" / "seed0" / artifact).read_bytes()
        second = (tmp_path / "b" / "simulate" / "seed0" / artifact).read_bytes()
        assert first == second, artifact


def test_invalid_config_report(tmp_path, write_config):
    raw = minimal_config(problem={"d": 2, "H": 1, "target": const_pp(1, 0), "density": const_pp(2, 1)})
    raw.pop("init")
    assert execute("risk", write_config(raw), str(tmp_path / "out"), quiet=True) == EXIT_USAGE
    report = read_json(tmp_path / "out" / "risk" / "invalid-config" / "failure_report.json")
    assert report["details"]["field"] == "problem.target.dim"


def test_unknown_subcommand(tmp_path):
    assert execute("nope", CONFIGS / "c_only.json", str(tmp_path), quiet=True) == EXIT_USAGE


def test_gradcheck_small_suite(tmp_path, write_config):
    raw = minimal_config(diagnostics={"gradcheck_instances": 5})
    assert execute("gradcheck", write_config(raw), str(tmp_path), quiet=True, threads=2) == EXIT_OK
    result = read_json(tmp_path / "gradcheck" / "seed0" / "result.json")
    assert result["instances"] == 5 and result["max_relative_error"] <= 1e-5


def test_rates_c_only(tmp_path):
    assert execute("rates", CONFIGS / "c_only.json", str(tmp_path), quiet=True) == EXIT_OK
    cert = read_json(tmp_path / "rates" / "seed0" / "certificate.json")
    assert cert["passes"] and cert["beta_hat"] > 2
    assert abs(cert["limit"][3]) <= 1e-8
    assert cert["limit_criterion"] == "stall"


def test_rates_perturbed_fit(tmp_path):
    assert execute("rates", CONFIGS / "fit_perturbed.json", str(tmp_path), quiet=True) == EXIT_OK
    cert = read_json(tmp_path / "rates" / "seed0" / "certificate.json")
    assert cert["passes"] and cert["beta_hat"] > 0
    assert math.isfinite(cert["C_loss"]) and math.isfinite(cert["C_param"])
    assert cert["loss_inflation"] <= 1.05 and cert["param_inflation"] <= 1.05


def test_rates_failure_writes_report(tmp_path):
    assert execute("rates", CONFIGS / "c_only.json", str(tmp_path), quiet=True, t_max=0.1) == EXIT_FAILED
    report = read_json(tmp_path / "rates" / "seed0" / "failure_report.json")
    assert "limit" in report["details"]
    # a later passing run clears the stale report
    assert execute("rates", CONFIGS / "c_only.json", str(tmp_path), quiet=True) == EXIT_OK
    assert not (tmp_path / "rates" / "seed0" / "failure_report.json").exists()


def test_loja_c_only(tmp_path):
    assert execute("loja", CONFIGS / "c_only.json", str(tmp_path), quiet=True) == EXIT_OK
    cert = read_json(tmp_path / "loja" / "seed0" / "certificate.json")
    assert 0.45 <= cert["loja"]["alpha_hat"] <= 0.55
    assert cert["loja"]["coords"] == [3]
    assert math.isfinite(cert["loja"]["c_hat"])
    assert not cert["loja"]["clamped"]
    assert math.isfinite(cert["tail"]["bound"]) and cert["tail"]["length"] > 0


def test_witness_config(tmp_path):
    assert execute("witness", CONFIGS / "witness.json", str(tmp_path), quiet=True) == EXIT_OK
    witness = read_json(tmp_path / "witness" / "seed0" / "witness.json")
    assert witness["degenerate"] == [0]
    assert witness["final"] <= 1e-6 and witness["monotone"]


def test_grad_distances_shrink(tmp_path):
    assert execute("grad", CONFIGS / "perfect_fit.json", str(tmp_path), quiet=True) == EXIT_OK
    smoothing = read_json(tmp_path / "grad" / "seed0" / "result.json")["smoothing"]
    assert smoothing["strictly_decreasing"]
    assert smoothing["gamma"] == 0.99 and smoothing["r"][-1] == 10000
    assert smoothing["distance"][-1] <= 1e-3


def test_seed_override_names_run(tmp_path, write_config):
    raw = minimal_config()
    raw.pop("init")
    assert execute("risk", write_config(raw), str(tmp_path), seed=3, quiet=True) == EXIT_OK
    resolved = read_json(tmp_path / "risk" / "seed3" / "resolved_config.json")
    assert resolved["init"]["seed"] == 3 and resolved["diagnostics"]["seed"] == 3


def test_cli_entrypoint(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "LOG_FILE", tmp_path / "reluflow.log")
    monkeypatch.setattr(sys, "excepthook", sys.excepthook)
    code = cli.main(["risk", "--config", str(CONFIGS / "perfect_fit.json"), "--out", str(tmp_path / "runs"), "--quiet"])
    assert code == EXIT_OK
    assert (tmp_path / "runs" / "risk" / "seed0" / "result.json").exists()
    assert cli.main(["risk", "--config", str(CONFIGS / "perfect_fit.json"), "--out", str(tmp_path),
                     "--seed", "-1"]) == EXIT_USAGE


def test_cli_rejects_unknown_subcommand():
    with pytest.raises(SystemExit) as err:
        cli.main(["explode", "--config", "x", "--out", "y"])
    assert err.value.code == 2


@pytest.mark.slow
def test_gradcheck_full_suite(tmp_path, write_config):
    raw = minimal_config(diagnostics={"gradcheck_instances": 100})
    assert execute("gradcheck", write_config(raw), str(tmp_path), quiet=True) == EXIT_OK


@pytest.mark.slow
def test_crosscheck_suite(tmp_path, write_config):
    raw = minimal_config(diagnostics={"crosscheck_instances": 50})
    assert execute("crosscheck", write_config(raw), str(tmp_path), quiet=True) == EXIT_OK
    summary = read_json(tmp_path / "crosscheck" / "seed0" / "result.json")["by_dimension"]
    assert set(summary) == {"1", "2", "3"}


def test_help_lists_subcommand_descriptions(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    out = capsys.readouterr().out
    assert "gradcheck" in out and "Finite-difference suite" in out


def test_template_is_a_working_skeleton():
    template = importlib.import_module("plugins.template")
    assert "name" not in discover_plugins()
    template.validate()
    ctx = RunContext("name", load_config(CONFIGS / "perfect_fit.json"), "seed0", {}, lambda msg: None)
    message, had_error = template.run(ctx)
    assert not had_error and ctx.result["loss"] <= 1e-15
