"""Calibration of model parameters against viral-load time series.

The observable is the free-virion compartment V. Fitting runs Nelder-Mead
in log-parameter space with box bounds and a few jittered restarts.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np
from scipy.optimize import minimize

from .errors import FitFailureError, InvalidInputError, ModelError, SimulationError
from .integrator import SimConfig, simulate
from .params import PARAM_NAMES, ModelParams, State, as_state

OBJECTIVE_SPACES = ("raw", "log10")

#: Recording grid used for fitting: 0.01-day steps, V sampled every 0.1 day.
FIT_SIM_CONFIG = SimConfig(t_start=0.0, t_end=140.0, step=0.01, output_every=10,
                           negativity_policy="clamp-to-zero")


@dataclasses.dataclass(frozen=True)
class Dataset:
    """Viral-load observations ``(t_days, virions/ml)`` for one subject."""

    times: np.ndarray
    loads: np.ndarray
    label: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        p = np.asarray(self.loads, dtype=float).ravel()
        if t.shape != p.shape:
            raise InvalidInputError("times and loads must have the same length")
        if t.size < 2:
            raise InvalidInputError("a dataset needs at least 2 observations")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p))):
            raise InvalidInputError("observations must be finite")
        if np.any(t < 0) or np.any(np.diff(t) <= 0):
            raise InvalidInputError("observation times must be >= 0 and strictly increasing")
        if np.any(p < 0):
            raise InvalidInputError("viral loads must be >= 0")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "loads", p)

    def __len__(self):
        return self.times.size


def read_dataset_csv(path, label=None):
    """Read a ``t_days,hbv_dna_per_ml`` CSV; lines starting with ``#`` are ignored."""
    rows = []
    header = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f.strip() for f in line.split(",")]
            if header is None:
                header = fields
                if header != ["t_days", "hbv_dna_per_ml"]:
                    raise InvalidInputError(
                        f"{path}: expected header 't_days,hbv_dna_per_ml', got {line!r}"
                    )
                continue
            try:
                rows.append((float(fields[0]), float(fields[1])))
            except (ValueError, IndexError):
                raise InvalidInputError(f"{path}:{lineno}: cannot parse {line!r}") from None
    if header is None:
        raise InvalidInputError(f"{path}: empty dataset")
    data = np.array(rows, dtype=float).reshape(-1, 2)
    return Dataset(data[:, 0], data[:, 1], label=label if label is not None else str(path))


def write_dataset_csv(dataset, path):
    with open(path, "w", newline="\n") as fh:
        if dataset.label:
            fh.write(f"# {dataset.label}\n")
        fh.write("t_days,hbv_dna_per_ml\n")
        for t, p in zip(dataset.times, dataset.loads):
            fh.write(f"{t:.17g},{p:.17g}\n")


def estimated_initial_state(params, dataset):
    """Uninfected liver at ``lam/mu`` and an inoculum equal to the first load."""
    return State(params.lam / params.mu, 0.0, 0.0, float(dataset.loads[0]))


def _transform(values, space):
    if space == "raw":
        return values
    return np.log10(np.maximum(values, 0.0) + 1.0)


def simulated_loads(params, dataset, config=FIT_SIM_CONFIG, initial=None):
    """Simulated V at the observation times (nearest recorded point)."""
    if config.t_start > dataset.times[0] or config.t_end < dataset.times[-1]:
        raise InvalidInputError(
            f"simulation horizon [{config.t_start}, {config.t_end}] does not cover "
            f"observations [{dataset.times[0]}, {dataset.times[-1]}]"
        )
    spacing = config.step * config.output_every
    min_gap = np.min(np.diff(dataset.times))
    if spacing * 10 > min_gap * (1 + 1e-12):
        raise InvalidInputError(
            f"recording spacing {spacing:g} must be at least 10x finer than the smallest "
            f"observation gap {min_gap:g}"
        )
    y0 = estimated_initial_state(params, dataset) if initial is None else as_state(initial)
    try:
        traj = simulate(params, y0, config)
    except SimulationError as exc:
        raise type(exc)(f"{exc} (params: {params.to_dict()})", exc.time) from exc
    idx = np.clip(np.rint((dataset.times - traj.times[0]) / spacing).astype(int), 0, len(traj) - 1)
    return traj.states[idx, 3]


def residuals(params, dataset, config=FIT_SIM_CONFIG, objective_space="log10", initial=None):
    """Observed minus simulated load, in the chosen objective space."""
    if objective_space not in OBJECTIVE_SPACES:
        raise InvalidInputError(f"objective_space must be one of {OBJECTIVE_SPACES}")
    sim = simulated_loads(params, dataset, config, initial)
    return _transform(dataset.loads, objective_space) - _transform(sim, objective_space)


def sse(params, dataset, config=FIT_SIM_CONFIG, objective_space="log10", initial=None):
    """Sum of squared errors between observed loads and simulated V."""
    r = residuals(params, dataset, config, objective_space, initial)
    return float(np.dot(r, r))


@dataclasses.dataclass(frozen=True)
class FitProblem:
    """What to fit.

    ``free`` maps parameter names to positive ``(lower, upper)`` bounds and
    ``fixed`` maps the remaining names to values. ``initial_state`` is a
    :class:`State` or ``"estimate"``.
    """

    dataset: Dataset
    free: dict
    fixed: dict
    initial_state: object = "estimate"
    objective_space: str = "log10"
    sim: SimConfig = FIT_SIM_CONFIG

    def __post_init__(self):
        free, fixed = dict(self.free), dict(self.fixed)
        overlap = set(free) & set(fixed)
        if overlap:
            raise InvalidInputError(f"parameter(s) both free and fixed: {', '.join(sorted(overlap))}")
        covered = set(free) | set(fixed)
        if covered != set(PARAM_NAMES):
            missing = set(PARAM_NAMES) - covered
            extra = covered - set(PARAM_NAMES)
            raise InvalidInputError(
                f"free and fixed must cover all nine parameters exactly "
                f"(missing: {sorted(missing)}, unknown: {sorted(extra)})"
            )
        for name, bounds in free.items():
            lo, hi = (float(b) for b in bounds)
            if not (0.0 < lo < hi and math.isfinite(hi)):
                raise InvalidInputError(f"bounds for {name} must satisfy 0 < lower < upper, got {bounds!r}")
            free[name] = (lo, hi)
        if self.objective_space not in OBJECTIVE_SPACES:
            raise InvalidInputError(f"objective_space must be one of {OBJECTIVE_SPACES}")
        if not (isinstance(self.initial_state, str) and self.initial_state == "estimate"):
            object.__setattr__(self, "initial_state", as_state(self.initial_state))
        # canonical order so results do not depend on dict insertion order
        object.__setattr__(self, "free", {n: free[n] for n in PARAM_NAMES if n in free})
        object.__setattr__(self, "fixed", {n: float(fixed[n]) for n in PARAM_NAMES if n in fixed})

    def params_from(self, free_values):
        values = dict(self.fixed)
        values.update(zip(self.free, free_values))
        return ModelParams.from_dict(values)

    def initial_for(self, params):
        if isinstance(self.initial_state, State):
            return self.initial_state
        return estimated_initial_state(params, self.dataset)

    def objective(self, params):
        return sse(params, self.dataset, self.sim, self.objective_space, self.initial_for(params))


@dataclasses.dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 3
    max_evaluations: int = 4000
    xatol: float = 1e-8
    ftol_rel: float = 1e-12
    initial_step: float = 0.1
    jitter: float = 0.25
    seed: int = 0


@dataclasses.dataclass
class FitResult:
    params: ModelParams
    sse: float
    evaluations: int
    converged: bool
    residuals: list
    objective_space: str = "log10"
    label: str = ""
    history: list = dataclasses.field(default_factory=list, repr=False)

    def to_json_dict(self):
        return {
            "params": self.params.to_dict(),
            "sse": self.sse,
            "objective_space": self.objective_space,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "residuals": list(self.residuals),
            "label": self.label,
        }

    def to_json(self):
        return json.dumps(self.to_json_dict(), indent=2)


def fit(problem, config=None):
    """Minimize the SSE over the free parameters of ``problem``.

    Returns the best of ``config.restarts`` Nelder-Mead runs. ``converged``
    is set when the final simplex diameter (log space) is below ``xatol`` or
    its objective spread is below ``ftol_rel * (1 + |best|)``.
    """
    config = OptimizerConfig() if config is None else config
    names = list(problem.free)

    if not names:
        params = problem.params_from([])
        value = problem.objective(params)
        res = residuals(params, problem.dataset, problem.sim, problem.objective_space, problem.initial_for(params))
        return FitResult(params, value, 1, True, res.tolist(), problem.objective_space, problem.dataset.label, [value])

    lower = np.log([problem.free[n][0] for n in names])
    upper = np.log([problem.free[n][1] for n in names])
    width = upper - lower
    center = 0.5 * (lower + upper)
    rng = np.random.default_rng(config.seed)

    evaluations = 0
    best = {"f": math.inf, "z": None}
    history = []

    def objective(z):
        nonlocal evaluations
        evaluations += 1
        z = np.clip(z, lower, upper)
        try:
            value = problem.objective(problem.params_from(np.exp(z)))
        except ModelError:
            value = math.inf
        if not math.isfinite(value):
            value = math.inf
        if value < best["f"]:
            best["f"], best["z"] = value, z.copy()
        history.append(best["f"])
        return value

    runs = []
    for restart in range(config.restarts):
        start = center.copy()
        if restart:
            start = np.clip(start + rng.uniform(-config.jitter, config.jitter, size=start.size) * width, lower, upper)
        steps = config.initial_step * width * rng.uniform(0.8, 1.2, size=start.size)
        simplex = [start]
        for i in range(start.size):
            vertex = start.copy()
            vertex[i] = vertex[i] + steps[i] if vertex[i] + steps[i] <= upper[i] else vertex[i] - steps[i]
            simplex.append(vertex)
        out = minimize(
            objective,
            start,
            method="Nelder-Mead",
            bounds=list(zip(lower, upper)),
            options={
                "initial_simplex": np.array(simplex),
                "xatol": config.xatol,
                "fatol": config.ftol_rel,
                "maxfev": config.max_evaluations,
            },
        )
        fvals = out.final_simplex[1]
        verts = out.final_simplex[0]
        finite = np.isfinite(fvals)
        if not finite.any():
            continue
        diameter = float(np.max(np.abs(verts - verts[0])))
        spread = float(np.max(fvals) - np.min(fvals)) if finite.all() else math.inf
        ok = diameter < config.xatol or spread < config.ftol_rel * (1 + abs(float(np.min(fvals))))
        runs.append((float(np.min(fvals)), ok))

    if best["z"] is None:
        raise FitFailureError(f"no restart produced a finite objective for dataset {problem.dataset.label!r}")

    params = problem.params_from(np.exp(best["z"]))
    value = problem.objective(params)
    res = residuals(params, problem.dataset, problem.sim, problem.objective_space, problem.initial_for(params))
    converged = any(ok for f, ok in runs if f <= best["f"])
    return FitResult(
        params=params,
        sse=value,
        evaluations=evaluations,
        converged=converged,
        residuals=res.tolist(),
        objective_space=problem.objective_space,
        label=problem.dataset.label,
        history=history,
    )


def average_params(results):
    """Arithmetic mean of each parameter over several fits."""
    results = list(results)
    if not results:
        raise InvalidInputError("average_params needs at least one result")
    table = np.array([r.params.as_tuple() for r in results])
    return ModelParams.from_sequence(table.mean(axis=0).tolist())


def synthetic_dataset(params, initial, times, noise_sd=0.0, seed=None,
                      config=FIT_SIM_CONFIG, label="synthetic"):
    """Sample the model's own V at ``times``, optionally with lognormal noise.

    ``noise_sd`` is the standard deviation of the log of the multiplicative
    noise factor (0.05 gives roughly 5% noise).
    """
    times = np.asarray(times, dtype=float)
    probe = Dataset(times, np.ones_like(times), label=label)
    loads = simulated_loads(params, probe, config, initial)
    if noise_sd > 0.0:
        rng = np.random.default_rng(seed)
        loads = loads * np.exp(rng.normal(0.0, noise_sd, size=loads.size))
    return Dataset(times, loads, label=label)


# Peak of V near day 21 (about three weeks) before scaling to 2e10 virions/ml.
_DEMO_K_FACTOR = 60.0
_DEMO_INOCULUM = 1e4
_DEMO_PEAK = 2e10


def demo_acute_params():
    """Parameters giving an acute-like course: V peaks near 2e10 within three weeks.

    Built from the baseline with a larger infection rate, then rescaled by the
    model's scale invariance (``lam -> s lam``, ``k -> k / s``, state ``-> s
    state``) so that the peak hits 2e10.
    """
    from .params import BASELINE

    base = BASELINE.replace(k=BASELINE.k * _DEMO_K_FACTOR)
    y0 = State(base.lam / base.mu, 0.0, 0.0, _DEMO_INOCULUM)
    traj = simulate(base, y0, SimConfig(t_end=140.0, step=0.01, output_every=10,
                                        negativity_policy="clamp-to-zero"))
    s = _DEMO_PEAK / traj.peaks["V"][1]
    return base.replace(**{"lambda": base.lam * s, "k": base.k / s}), s * _DEMO_INOCULUM


def demo_dataset(noise_sd=0.05, seed=0, times=None):
    """Synthetic chimpanzee-like viral-load series used for demonstrations."""
    params, inoculum = demo_acute_params()
    if times is None:
        times = np.arange(0.0, 141.0, 7.0)
    y0 = State(params.lam / params.mu, 0.0, 0.0, inoculum)
    return synthetic_dataset(params, y0, times, noise_sd=noise_sd, seed=seed, label="demo-acute")
