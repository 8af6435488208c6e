import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from hbvcapsid import model
from hbvcapsid.cli import main
from hbvcapsid.config import RunConfig, dump_config, load_config
from hbvcapsid.estimation import synthetic_dataset, write_dataset_csv
from hbvcapsid.params import BASELINE, IC1, PARAM_NAMES, scenario


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# --- configuration -----------------------------------------------------------

def test_config_round_trip_is_byte_identical(tmp_path, capsys):
    code, text, _ = _run(["config", "--scenario", "r0-above-1", "--t-end", "40", "--initial", "ic2"], capsys)
    assert code == 0
    cfg = load_config(text)
    assert dump_config(cfg) == text
    assert cfg.params.k == 3.38e-11 and cfg.sim.t_end == 40.0 and cfg.initial == "ic2"
    path = tmp_path / "cfg.json"
    path.write_text(text)
    code, again, _ = _run(["config", "--config", str(path)], capsys)
    assert again == text


def test_config_explicit_initial_round_trip(capsys):
    code, text, _ = _run(["config", "--initial", "1e8,2e7,3e9,0.1"], capsys)
    assert code == 0
    assert json.loads(text)["initial"] == [1e8, 2e7, 3e9, 0.1]
    assert dump_config(load_config(text)) == text


def test_flags_override_config_file(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"params": {"gamma": 0.5}, "seed": 4}))
    code, text, _ = _run(["config", "--config", str(path), "--k", "1e-12"], capsys)
    data = json.loads(text)
    assert data["params"]["gamma"] == 0.5 and data["params"]["k"] == 1e-12 and data["seed"] == 4


def test_run_config_schema_keys():
    data = RunConfig().to_dict()
    assert set(data) == {"params", "initial", "sim", "seed"}
    assert set(data["params"]) == set(PARAM_NAMES)
    assert set(data["sim"]) == {"t_start", "t_end", "step", "output_every", "convergence_epsilon", "negativity_policy"}


# --- exit codes --------------------------------------------------------------

def test_invalid_alpha_exits_2(tmp_path, capsys):
    code, _, err = _run(["simulate", "--alpha", "1.5", "-o", str(tmp_path)], capsys)
    assert code == 2
    assert "alpha" in err and "0 < alpha <= 1" in err


def test_missing_config_and_dataset_exit_2(tmp_path, capsys):
    assert _run(["simulate", "--config", str(tmp_path / "nope.json")], capsys)[0] == 2
    assert _run(["fit", str(tmp_path / "nope.csv"), "-o", str(tmp_path)], capsys)[0] == 2


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--step", "abc"])
    assert info.value.code == 2
    capsys.readouterr()


def test_threshold_violation_with_remedy(tmp_path, capsys):
    code, out, _ = _run(["--error-json", "equilibria", "--gamma", "20", "--alpha", "0.5", "-o", str(tmp_path)], capsys)
    assert code == 2
    payload = json.loads(out)
    assert payload["error"] == "ThresholdViolationError" and payload["exit_code"] == 2
    assert "gamma below" in payload["message"]


def test_numerical_failure_exits_3(tmp_path, capsys):
    code, out, _ = _run(
        ["--error-json", "simulate", "--gamma", "20", "--alpha", "0.5", "--t-end", "500", "-o", str(tmp_path)], capsys
    )
    assert code == 3
    payload = json.loads(out)
    assert payload["exit_code"] == 3 and "t =" in payload["message"]


# --- simulate ----------------------------------------------------------------

def test_simulate_clearance_summary(tmp_path, capsys):
    code, _, _ = _run(["simulate", "--scenario", "r0-below-1", "-o", str(tmp_path)], capsys)
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    run = summary["runs"]["main"]
    assert run["r0"] < 1
    e_u = model.disease_free_equilibrium(scenario("r0-below-1"))
    assert run["terminal"]["X"] == pytest.approx(e_u.x, rel=5e-3)
    assert run["bounds"]["passed"] is not None
    assert set(run["peaks"]) == {"X", "Y", "D", "V"}
    rows = _read_csv(tmp_path / "trajectory.csv")
    assert rows[0] == ["t", "X", "Y", "D", "V"] and len(rows) == 502


def test_simulate_compare_recycling(tmp_path, capsys):
    code, _, _ = _run(["simulate", "--compare-recycling", "--t-end", "50", "-o", str(tmp_path)], capsys)
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["runs"]["no_recycling"]["params"]["gamma"] == 0.0
    assert summary["runs"]["main"]["params"]["gamma"] == BASELINE.gamma
    assert (tmp_path / "trajectory_no_recycling.csv").exists()


# --- equilibria --------------------------------------------------------------

def test_equilibria_baseline(tmp_path, capsys):
    code, out, _ = _run(["equilibria", "-o", str(tmp_path)], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["r0"] == pytest.approx(0.152355, abs=1e-6)
    assert report["disease_free"]["verdict"] == model.STABLE
    assert report["endemic"] is None
    assert report["mu_star"] == pytest.approx(model.mu_star(BASELINE))
    assert json.loads((tmp_path / "equilibria.json").read_text()) == report


def test_equilibria_k_times_ten(tmp_path, capsys):
    code, out, _ = _run(["equilibria", "--scenario", "r0-above-1", "-o", str(tmp_path)], capsys)
    report = json.loads(out)
    flags = report["endemic"]["routh_hurwitz"]["flags"]
    assert len(flags) == 5 and all(flags.values())
    assert report["disease_free"]["verdict"] == model.UNSTABLE


# --- sweep -------------------------------------------------------------------

def test_sweep_long_format(tmp_path, capsys):
    code, _, _ = _run(
        ["sweep", "--param", "gamma", "--values", "0,0.5,1.0", "--t-end", "20", "--jobs", "2", "-o", str(tmp_path)],
        capsys,
    )
    assert code == 0
    rows = _read_csv(tmp_path / "sweep.csv")
    assert rows[0] == ["sweep_value", "t", "X", "Y", "D", "V"]
    assert sorted({float(r[0]) for r in rows[1:]}) == [0.0, 0.5, 1.0]
    summary = json.loads((tmp_path / "sweep_summary.json").read_text())
    assert [v["value"] for v in summary["values"]] == [0.0, 0.5, 1.0]


def test_sweep_records_failures_and_continues(tmp_path, capsys):
    code, _, _ = _run(["sweep", "--param", "alpha", "--values", "0.5,1.5", "--t-end", "10", "-o", str(tmp_path)], capsys)
    assert code == 0
    summary = json.loads((tmp_path / "sweep_summary.json").read_text())
    assert len(summary["values"]) == 1 and summary["failures"][0]["value"] == 1.5


def test_sweep_empty_values_exit_2(tmp_path, capsys):
    assert _run(["sweep", "--param", "gamma", "--values", "", "-o", str(tmp_path)], capsys)[0] == 2


# --- elasticity --------------------------------------------------------------

def test_elasticity_table(tmp_path, capsys):
    code, _, _ = _run(["elasticity", "-o", str(tmp_path)], capsys)
    assert code == 0
    rows = dict(_read_csv(tmp_path / "elasticity.csv")[1:])
    assert float(rows["alpha"]) == pytest.approx(-0.63340, abs=1e-4)
    assert float(rows["gamma"]) == pytest.approx(0.12566, abs=1e-4)
    assert float(rows["beta"]) == pytest.approx(0.02635, abs=1e-4)
    assert float(rows["lambda"]) == 1.0
    assert float(rows["lambda"]) + float(rows["mu"]) == 0.0


# --- gsa ---------------------------------------------------------------------

def test_gsa_smoke(tmp_path, capsys):
    code, _, _ = _run(["gsa", "--n", "20", "--seed", "2", "--jobs", "2", "-o", str(tmp_path)], capsys)
    assert code == 0
    rows = _read_csv(tmp_path / "prcc.csv")
    assert rows[0] == ["parameter", "compartment", "prcc"] and len(rows) == 37
    values = np.array([float(r[2]) for r in rows[1:]])
    finite = values[np.isfinite(values)]
    assert np.all(np.abs(finite) <= 1)
    assert len(list((tmp_path / "scatter").iterdir())) == 36
    first = (tmp_path / "prcc.csv").read_bytes()
    _run(["gsa", "--n", "20", "--seed", "2", "-o", str(tmp_path)], capsys)
    assert (tmp_path / "prcc.csv").read_bytes() == first


# --- fit ---------------------------------------------------------------------

def test_fit_four_datasets_with_average(tmp_path, capsys):
    times = np.linspace(2.0, 60.0, 12)
    paths = []
    for i in range(4):
        data = synthetic_dataset(BASELINE, IC1, times, noise_sd=0.05, seed=i, label=f"chimp{i}")
        path = tmp_path / f"chimp{i}.csv"
        write_dataset_csv(data, path)
        paths.append(str(path))
    code, _, _ = _run(
        ["fit", *paths, "--free", "k:3.38e-13:3.38e-11", "--fit-initial", "ic1", "--restarts", "1",
         "--average", "--jobs", "4", "-o", str(tmp_path)],
        capsys,
    )
    assert code == 0
    fits = [json.loads((tmp_path / f"fit_chimp{i}.json").read_text()) for i in range(4)]
    for f in fits:
        assert set(f) >= {"params", "sse", "objective_space", "evaluations", "converged", "residuals"}
        assert f["objective_space"] == "log10"
    avg = json.loads((tmp_path / "average_params.json").read_text())["params"]
    for name in PARAM_NAMES:
        assert avg[name] == pytest.approx(np.mean([f["params"][name] for f in fits]), rel=1e-14)
    assert avg["k"] == pytest.approx(BASELINE.k, rel=0.15)


def test_fit_bad_free_spec(tmp_path, capsys):
    data = synthetic_dataset(BASELINE, IC1, [1.0, 2.0])
    path = tmp_path / "d.csv"
    write_dataset_csv(data, path)
    assert _run(["fit", str(path), "--free", "omega:1:2", "-o", str(tmp_path)], capsys)[0] == 2


# --- module entry point ------------------------------------------------------

def test_python_dash_m(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "hbvcapsid", "equilibria", "-o", str(tmp_path)],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["r_s"] == pytest.approx(1.5788)
