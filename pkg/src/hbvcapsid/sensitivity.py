"""Global sensitivity analysis: Latin hypercube sampling and partial rank
correlation coefficients (PRCC) of every compartment at a query time.
"""

from __future__ import annotations

import dataclasses
import os
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateOutputError, DegenerateRangeError, InvalidInputError, ModelError
from .integrator import SimConfig, simulate
from .params import COMPARTMENTS, IC3, PARAM_NAMES, ModelParams, as_state

RIDGE = 1e-10
DEGENERATE_TOL = 1e-14
FAILURE_WARN_FRACTION = 0.10

# Upper limits of the admissible domain; sampling ranges are clipped to them.
_UPPER_LIMITS = {"alpha": 1.0}


@dataclasses.dataclass(frozen=True)
class LhsDesign:
    """An ``n x 9`` Latin hypercube over ``[low, high]`` per parameter."""

    n: int
    ranges: np.ndarray
    matrix: np.ndarray
    seed: int
    names: tuple = PARAM_NAMES

    def row_params(self, i):
        return ModelParams.from_sequence(self.matrix[i].tolist())


def lhs_sample(baseline, fraction_low=0.8, fraction_high=1.2, n=1000, seed=0):
    """Stratified uniform sample of all nine parameters around ``baseline``.

    Each column's range ``[fraction_low * base, fraction_high * base]`` is
    cut into ``n`` equal strata with one uniform draw per stratum; strata are
    assigned to rows by an independent permutation per column.
    """
    if not 0.0 < fraction_low < fraction_high:
        raise InvalidInputError("need 0 < fraction_low < fraction_high")
    if n < 2:
        raise InvalidInputError("LHS needs n >= 2")
    base = np.array(baseline.as_tuple())
    zero = [name for name, b in zip(PARAM_NAMES, base) if b == 0.0]
    if zero:
        raise DegenerateRangeError(f"baseline value of {', '.join(zero)} is zero; range would be degenerate")
    low = fraction_low * base
    high = fraction_high * base
    for j, name in enumerate(PARAM_NAMES):
        if name in _UPPER_LIMITS:
            high[j] = min(high[j], _UPPER_LIMITS[name])
            if not high[j] > low[j]:
                raise DegenerateRangeError(f"range of {name} collapses after clipping to its domain")
    rng = np.random.default_rng(seed)
    u = np.empty((n, len(base)))
    for j in range(len(base)):
        u[:, j] = (rng.permutation(n) + rng.random(n)) / n
    matrix = low + u * (high - low)
    return LhsDesign(n=n, ranges=np.column_stack([low, high]), matrix=matrix, seed=seed)


def rank_transform(values):
    """Ranks 1..n with ties given their average rank."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise InvalidInputError("rank_transform needs at least 2 values")
    return rankdata(values, method="average")


def _residualize(target, covariates):
    a = np.column_stack([np.ones(len(target)), covariates])
    gram = a.T @ a
    gram[np.diag_indices_from(gram)] += RIDGE * np.max(np.diag(gram))
    coef = np.linalg.solve(gram, a.T @ target)
    return target - a @ coef


def _pearson(x, y):
    dx = x - x.mean()
    dy = y - y.mean()
    return float(np.sum(dx * dy) / np.sqrt(np.sum(dx * dx) * np.sum(dy * dy)))


def partial_rank_correlation(x_ranks, y_ranks, covariate_ranks):
    """Correlation of ``x`` and ``y`` ranks after regressing out the covariates.

    Raises :class:`DegenerateOutputError` when either residual has
    (relatively) vanishing variance.
    """
    rx = _residualize(x_ranks, covariate_ranks)
    ry = _residualize(y_ranks, covariate_ranks)
    for label, r, base in (("parameter", rx, x_ranks), ("output", ry, y_ranks)):
        total = np.sum((base - base.mean()) ** 2)
        if total == 0.0 or np.sum(r * r) < DEGENERATE_TOL * total:
            raise DegenerateOutputError(f"{label} rank residual has vanishing variance")
    return float(np.clip(_pearson(rx, ry), -1.0, 1.0))


@dataclasses.dataclass
class PrccResult:
    """PRCC of each parameter (rows) against each output (columns).

    Degenerate pairs hold NaN and are listed in ``degenerate``. Rows in
    ``failures`` (non-finite outputs) are excluded from every coefficient.
    """

    parameters: tuple
    outputs: tuple
    query_time: float
    prcc: np.ndarray
    sample_inputs: np.ndarray
    sample_outputs: np.ndarray
    failures: list
    degenerate: list = dataclasses.field(default_factory=list)
    warnings: list = dataclasses.field(default_factory=list)
    design: object = None

    def value(self, parameter, output):
        return float(self.prcc[self.parameters.index(parameter), self.outputs.index(output)])

    def used_rows(self):
        mask = np.ones(len(self.sample_outputs), dtype=bool)
        mask[list(self.failures)] = False
        return mask

    def scatter(self, parameter, output):
        """``(rank of parameter, rank of output)`` over the successful rows."""
        mask = self.used_rows()
        return (
            rank_transform(self.sample_inputs[mask, self.parameters.index(parameter)]),
            rank_transform(self.sample_outputs[mask, self.outputs.index(output)]),
        )


def prcc(inputs, outputs, parameters=PARAM_NAMES, output_names=COMPARTMENTS, query_time=float("nan")):
    """PRCC of every input column against every output column.

    ``inputs`` is an :class:`LhsDesign` or an ``n x p`` array; ``outputs`` is
    ``n x m``. Rows with any non-finite output are dropped.
    """
    x = np.asarray(inputs.matrix if isinstance(inputs, LhsDesign) else inputs, dtype=float)
    y = np.asarray(outputs, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] != y.shape[0]:
        raise InvalidInputError("inputs and outputs must have the same number of rows")
    parameters = tuple(parameters)[: x.shape[1]]
    output_names = tuple(output_names)[: y.shape[1]]
    ok = np.all(np.isfinite(y), axis=1)
    failures = np.flatnonzero(~ok).tolist()
    p = x.shape[1]
    if ok.sum() < p + 2:
        raise InvalidInputError(
            f"need at least {p + 2} successful samples for PRCC, have {int(ok.sum())}"
        )
    xr = np.column_stack([rank_transform(col) for col in x[ok].T])
    yr = np.column_stack([rank_transform(col) for col in y[ok].T])
    coeffs = np.full((p, y.shape[1]), np.nan)
    degenerate = []
    for j in range(p):
        others = np.delete(xr, j, axis=1)
        for o in range(y.shape[1]):
            try:
                coeffs[j, o] = partial_rank_correlation(xr[:, j], yr[:, o], others)
            except DegenerateOutputError:
                degenerate.append((parameters[j], output_names[o]))
    return PrccResult(
        parameters=parameters,
        outputs=output_names,
        query_time=query_time,
        prcc=coeffs,
        sample_inputs=x,
        sample_outputs=y,
        failures=failures,
        degenerate=degenerate,
    )


def _simulate_row(params_row, initial, config):
    try:
        params = ModelParams.from_sequence(params_row)
        return simulate(params, initial, config).terminal
    except ModelError:
        return (np.nan,) * 4


def run_gsa(baseline, sim_config=None, n=1000, seed=0, query_time=300.0, initial=IC3,
            fraction_low=0.8, fraction_high=1.2, jobs=1):
    """Sample, simulate every row up to ``query_time`` and compute PRCCs.

    Results do not depend on ``jobs``: each row writes its own slot of a
    preallocated output matrix.
    """
    config = SimConfig() if sim_config is None else sim_config
    if not config.t_start < query_time <= config.t_end:
        raise InvalidInputError(
            f"query_time {query_time} outside simulation horizon ({config.t_start}, {config.t_end}]"
        )
    config = dataclasses.replace(config, t_end=float(query_time))
    initial = as_state(initial)
    design = lhs_sample(baseline, fraction_low, fraction_high, n, seed)
    out = np.empty((n, len(COMPARTMENTS)))

    def work(i):
        out[i] = _simulate_row(design.matrix[i].tolist(), initial, config)

    jobs = max(1, int(jobs or os.cpu_count() or 1))
    if jobs == 1:
        for i in range(n):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(work, range(n)))

    result = prcc(design, out, query_time=float(query_time))
    result.design = design
    if len(result.failures) > FAILURE_WARN_FRACTION * n:
        msg = f"{len(result.failures)} of {n} simulations failed; PRCC reliability reduced"
        result.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return result


def write_prcc_csv(result, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("parameter,compartment,prcc\n")
        for j, name in enumerate(result.parameters):
            for o, comp in enumerate(result.outputs):
                fh.write(f"{name},{comp},{result.prcc[j, o]:.17g}\n")


def write_scatter_csvs(result, directory):
    """One ``scatter_<parameter>_<compartment>.csv`` per pair; returns the paths."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for name in result.parameters:
        for comp in result.outputs:
            rp, ro = result.scatter(name, comp)
            path = os.path.join(directory, f"scatter_{name}_{comp}.csv")
            with open(path, "w", newline="\n") as fh:
                fh.write("rank_param,rank_output\n")
                for a, b in zip(rp, ro):
                    fh.write(f"{a:.17g},{b:.17g}\n")
            paths.append(path)
    return paths


def write_design_csv(design, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(design.names) + "\n")
        for row in design.matrix:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")
