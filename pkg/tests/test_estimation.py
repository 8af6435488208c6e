import json

import numpy as np
import pytest

from hbvcapsid import model
from hbvcapsid.errors import FitFailureError, InvalidInputError
from hbvcapsid.estimation import (
    FIT_SIM_CONFIG,
    Dataset,
    FitProblem,
    FitResult,
    OptimizerConfig,
    average_params,
    demo_dataset,
    estimated_initial_state,
    fit,
    read_dataset_csv,
    residuals,
    simulated_loads,
    sse,
    synthetic_dataset,
    write_dataset_csv,
)
from hbvcapsid.integrator import SimConfig, simulate
from hbvcapsid.params import BASELINE, IC1, PARAM_NAMES

TIMES = np.linspace(2.0, 60.0, 12)
FAST = OptimizerConfig(restarts=1, max_evaluations=300)


@pytest.fixture(scope="module")
def clean():
    return synthetic_dataset(BASELINE, IC1, TIMES, label="clean")


def _problem(dataset, free, truth=BASELINE, **kwargs):
    bounds = {n: (truth.get(n) / 10, truth.get(n) * 10) for n in free}
    fixed = {n: truth.get(n) for n in PARAM_NAMES if n not in free}
    kwargs.setdefault("initial_state", IC1)
    return FitProblem(dataset=dataset, free=bounds, fixed=fixed, **kwargs)


# --- datasets ----------------------------------------------------------------

def test_dataset_validation():
    with pytest.raises(InvalidInputError):
        Dataset([1.0], [2.0])
    with pytest.raises(InvalidInputError):
        Dataset([1.0, 1.0], [2.0, 3.0])
    with pytest.raises(InvalidInputError):
        Dataset([-1.0, 1.0], [2.0, 3.0])
    with pytest.raises(InvalidInputError):
        Dataset([0.0, 1.0], [2.0, -3.0])
    with pytest.raises(InvalidInputError):
        Dataset([0.0, 1.0], [2.0, np.nan])


def test_dataset_csv_round_trip(tmp_path, clean):
    path = tmp_path / "d.csv"
    write_dataset_csv(clean, path)
    back = read_dataset_csv(path)
    np.testing.assert_array_equal(back.times, clean.times)
    np.testing.assert_array_equal(back.loads, clean.loads)
    assert path.read_text().splitlines()[1] == "t_days,hbv_dna_per_ml"


def test_dataset_csv_comments_and_bad_header(tmp_path):
    good = tmp_path / "good.csv"
    good.write_text("# chimp 1603\nt_days,hbv_dna_per_ml\n0,10\n# mid comment\n7,1e5\n")
    data = read_dataset_csv(good, label="1603")
    assert data.label == "1603" and len(data) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("time,load\n0,1\n1,2\n")
    with pytest.raises(InvalidInputError):
        read_dataset_csv(bad)
    garbled = tmp_path / "garbled.csv"
    garbled.write_text("t_days,hbv_dna_per_ml\n0,abc\n1,2\n")
    with pytest.raises(InvalidInputError):
        read_dataset_csv(garbled)


def test_estimated_initial_state(clean):
    assert estimated_initial_state(BASELINE, clean) == (BASELINE.lam / BASELINE.mu, 0.0, 0.0, clean.loads[0])


# --- objective ---------------------------------------------------------------

def test_sse_self_consistency(clean):
    for space in ("raw", "log10"):
        value = sse(BASELINE, clean, objective_space=space, initial=IC1)
        assert value <= 1e-10 * float(np.sum(clean.loads ** 2))
    assert sse(BASELINE, clean, objective_space="raw", initial=IC1) == 0.0


def test_sse_per_point_definition():
    data = Dataset([5.0, 10.0], [1.0e9, 3.0e9])
    traj = simulate(BASELINE, IC1, SimConfig(t_end=10.0, step=0.01, output_every=1))
    p = traj.states[[500, 1000], 3]
    expected = float(np.sum((data.loads - p) ** 2))
    assert sse(BASELINE, data, objective_space="raw", initial=IC1) == pytest.approx(expected, rel=1e-12)
    r = residuals(BASELINE, data, objective_space="log10", initial=IC1)
    np.testing.assert_allclose(r, np.log10(data.loads + 1) - np.log10(p + 1), rtol=1e-12)


def test_sse_local_minimum_probe(clean):
    base = sse(BASELINE, clean, initial=IC1)
    for name in ("k", "beta", "a", "c"):
        bumped = BASELINE.replace(**{name: BASELINE.get(name) * 1.1})
        assert sse(bumped, clean, initial=IC1) > base


def test_sse_rejects_uncovered_horizon_and_coarse_grid():
    late = Dataset([1.0, 200.0], [1.0, 1.0])
    with pytest.raises(InvalidInputError):
        sse(BASELINE, late)
    dense = Dataset([1.0, 1.5], [1.0, 1.0])
    with pytest.raises(InvalidInputError):
        sse(BASELINE, dense, config=SimConfig(t_end=10.0, step=0.01, output_every=10))
    with pytest.raises(InvalidInputError):
        sse(BASELINE, Dataset([1.0, 2.0], [1.0, 1.0]), objective_space="ln")


def test_simulated_loads_default_initial(clean):
    loads = simulated_loads(BASELINE, clean)
    assert loads.shape == clean.times.shape
    assert np.all(np.isfinite(loads))


# --- problem validation ------------------------------------------------------

def test_fit_problem_validation(clean):
    fixed = {n: BASELINE.get(n) for n in PARAM_NAMES if n != "k"}
    with pytest.raises(InvalidInputError):
        FitProblem(clean, free={"k": (1e-12, 1e-13)}, fixed=fixed)
    with pytest.raises(InvalidInputError):
        FitProblem(clean, free={"k": (0.0, 1e-11)}, fixed=fixed)
    with pytest.raises(InvalidInputError):
        FitProblem(clean, free={}, fixed=fixed)
    with pytest.raises(InvalidInputError):
        FitProblem(clean, free={"k": (1e-13, 1e-11)}, fixed={**fixed, "k": 1.0})
    with pytest.raises(InvalidInputError):
        FitProblem(clean, free={"k": (1e-13, 1e-11)}, fixed=fixed, objective_space="ln")


def test_fit_problem_canonical_order(clean):
    a = _problem(clean, ["beta", "k"])
    b = _problem(clean, ["k", "beta"])
    assert list(a.free) == list(b.free) == ["k", "beta"]


# --- fit ---------------------------------------------------------------------

def test_fit_without_free_parameters(clean):
    result = fit(_problem(clean, []))
    assert result.converged
    assert result.params == BASELINE
    assert result.sse == sse(BASELINE, clean, initial=IC1)


def test_fit_recovers_k_and_beta(clean):
    result = fit(_problem(clean, ["k", "beta"]))
    assert result.converged
    assert result.params.k == pytest.approx(BASELINE.k, rel=0.02)
    assert result.params.beta == pytest.approx(BASELINE.beta, rel=0.02)
    # reported sse is the objective recomputed at the returned point
    recomputed = sse(result.params, clean, initial=IC1)
    assert result.sse == pytest.approx(recomputed, rel=1e-12, abs=1e-300)
    assert len(result.residuals) == len(clean)


def test_fit_is_deterministic_and_history_monotone(clean):
    problem = _problem(clean, ["k"])
    a = fit(problem, FAST)
    b = fit(problem, FAST)
    assert a.params == b.params and a.sse == b.sse and a.evaluations == b.evaluations
    assert a.history == b.history
    assert all(later <= earlier for earlier, later in zip(a.history, a.history[1:]))
    assert a.evaluations == len(a.history)


def test_fit_identifiability_of_a_and_beta():
    truth = BASELINE.replace(k=BASELINE.k * 10)
    data = synthetic_dataset(truth, IC1, TIMES)
    result = fit(_problem(data, ["a", "beta"], truth=truth))
    assert result.converged
    horizon = SimConfig(t_end=140.0)
    v_fit = simulate(result.params, IC1, horizon).terminal.v
    v_true = simulate(truth, IC1, horizon).terminal.v
    assert v_fit == pytest.approx(v_true, rel=0.05)
    assert model.compute_r0(result.params) == pytest.approx(model.compute_r0(truth), rel=0.05)


def test_fit_failure_when_every_objective_diverges(clean):
    truth = BASELINE.replace(alpha=0.5)
    fixed = {n: truth.get(n) for n in PARAM_NAMES if n != "gamma"}
    problem = FitProblem(clean, free={"gamma": (15.0, 30.0)}, fixed=fixed, initial_state=IC1)
    with pytest.raises(FitFailureError):
        fit(problem, OptimizerConfig(restarts=2, max_evaluations=20))


def test_fit_result_json(clean):
    result = fit(_problem(clean, []))
    data = json.loads(result.to_json())
    assert set(data) >= {"params", "sse", "objective_space", "evaluations", "converged", "residuals"}
    assert set(data["params"]) == set(PARAM_NAMES)


# --- averaging ---------------------------------------------------------------

def _result(params):
    return FitResult(params=params, sse=0.0, evaluations=1, converged=True, residuals=[])


def test_average_params_cases():
    assert average_params([_result(BASELINE)]) == BASELINE
    avg = average_params([_result(BASELINE.replace(k=2e-12)), _result(BASELINE.replace(k=4e-12))])
    assert avg.k == pytest.approx(3e-12, rel=1e-15)
    with pytest.raises(InvalidInputError):
        average_params([])


def test_average_params_four_fits():
    rng = np.random.default_rng(4)
    sets = [BASELINE.replace(k=BASELINE.k * rng.uniform(0.5, 2), beta=BASELINE.beta * rng.uniform(0.5, 2)) for _ in range(4)]
    avg = average_params([_result(p) for p in sets])
    for name in PARAM_NAMES:
        oracle = sum(p.get(name) for p in sets) / 4
        assert avg.get(name) == pytest.approx(oracle, rel=1e-15)


# --- synthetic data ----------------------------------------------------------

def test_synthetic_noise_is_seeded_and_multiplicative(clean):
    a = synthetic_dataset(BASELINE, IC1, TIMES, noise_sd=0.05, seed=1)
    b = synthetic_dataset(BASELINE, IC1, TIMES, noise_sd=0.05, seed=1)
    np.testing.assert_array_equal(a.loads, b.loads)
    ratio = np.log(a.loads / clean.loads)
    assert 0 < np.std(ratio) < 0.15


def test_demo_dataset_shape():
    data = demo_dataset(noise_sd=0.0)
    peak = int(np.argmax(data.loads))
    assert data.times[peak] <= 21.0
    assert data.loads[peak] == pytest.approx(2e10, rel=0.05)
    assert data.times[-1] <= FIT_SIM_CONFIG.t_end
