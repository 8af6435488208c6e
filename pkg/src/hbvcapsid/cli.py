"""Command-line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _backend, estimation, model, sensitivity
from .config import RunConfig, dump_config, dumps_canonical, read_config
from .errors import (
    DegenerateOutputError,
    FitFailureError,
    InvalidInputError,
    ModelError,
    NonexistenceError,
    SimulationError,
    ThresholdViolationError,
)
from .integrator import SimConfig, check_bounds, simulate, write_trajectory_csv
from .params import COMPARTMENTS, INITIAL_PRESETS, PARAM_NAMES, SCENARIOS, scenario

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    return values


def _add_config_args(p):
    g = p.add_argument_group("configuration (flags override --config)")
    g.add_argument("--config", help="run configuration JSON")
    g.add_argument("--scenario", choices=sorted(SCENARIOS), help="parameter preset")
    for name in PARAM_NAMES:
        g.add_argument(f"--{name}", type=float, dest=f"p_{name}", metavar="VALUE")
    g.add_argument("--initial", help="ic1, ic2, ic3 or four comma-separated values X,Y,D,V")
    g.add_argument("--t-start", type=float)
    g.add_argument("--t-end", type=float)
    g.add_argument("--step", type=float)
    g.add_argument("--output-every", type=int)
    g.add_argument("--epsilon", type=float, dest="convergence_epsilon")
    g.add_argument("--negativity-policy", choices=["reject", "clamp-to-zero"])
    g.add_argument("--seed", type=int)
    p.add_argument("-o", "--output-dir", default=".", help="directory for output files")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hbvcapsid",
        description="Hepatitis B within-host model with capsid recycling.",
    )
    parser.add_argument("--error-json", action="store_true", help="print errors as JSON on stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("config", help="print the resolved run configuration")
    _add_config_args(p)

    p = sub.add_parser("simulate", help="integrate one trajectory")
    _add_config_args(p)
    p.add_argument("--compare-recycling", action="store_true",
                   help="also run with gamma = 0 (no capsid recycling)")

    p = sub.add_parser("equilibria", help="equilibria, R0 and stability report")
    _add_config_args(p)

    p = sub.add_parser("sweep", help="one trajectory per value of a parameter")
    _add_config_args(p)
    p.add_argument("--param", required=True, choices=PARAM_NAMES)
    p.add_argument("--values", required=True, type=_float_list)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("fit", help="fit parameters to viral-load CSV files")
    _add_config_args(p)
    p.add_argument("datasets", nargs="+", help="CSV files with header t_days,hbv_dna_per_ml")
    p.add_argument("--free", action="append", default=[], metavar="NAME:LOW:HIGH",
                   help="free parameter with bounds (repeatable; default k and beta within 10x)")
    p.add_argument("--objective", choices=estimation.OBJECTIVE_SPACES, default="log10")
    p.add_argument("--fit-initial", default="estimate",
                   help="'estimate' (X=lambda/mu, V=first load) or an initial preset")
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--average", action="store_true", help="also write the mean parameter set")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("gsa", help="LHS-PRCC global sensitivity analysis")
    _add_config_args(p)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--query-time", type=float, default=300.0)
    p.add_argument("--gsa-initial", default="ic3", help="initial preset or X,Y,D,V for every run")
    p.add_argument("--low", type=float, default=0.8)
    p.add_argument("--high", type=float, default=1.2)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("elasticity", help="elasticities of R0 for all parameters")
    _add_config_args(p)
    return parser


def _parse_initial(text):
    if text in INITIAL_PRESETS:
        return text
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise InvalidInputError(f"initial must be a preset or four numbers, got {text!r}") from None
    return values


def resolve_config(args):
    """Defaults, then ``--config``, then ``--scenario``, then individual flags."""
    cfg = RunConfig()
    if args.config:
        if not os.path.exists(args.config):
            raise UsageError(f"config file not found: {args.config}")
        cfg = read_config(args.config)
    params = cfg.params
    if args.scenario:
        params = scenario(args.scenario)
    overrides = {n: getattr(args, f"p_{n}") for n in PARAM_NAMES if getattr(args, f"p_{n}") is not None}
    if overrides:
        merged = params.to_dict()
        merged.update(overrides)
        params = type(params).from_dict(merged)
    sim = cfg.sim.to_dict()
    for key in ("t_start", "t_end", "step", "output_every", "convergence_epsilon", "negativity_policy"):
        value = getattr(args, key, None)
        if value is not None:
            sim[key] = value
    initial = cfg.initial if args.initial is None else _parse_initial(args.initial)
    seed = cfg.seed if args.seed is None else args.seed
    return RunConfig.from_dict(
        {"initial": list(initial) if not isinstance(initial, str) else initial, "sim": sim, "seed": seed},
        base=dataclasses.replace(cfg, params=params),
    )


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _state_dict(state):
    return {name: float(v) for name, v in zip(COMPARTMENTS, state)}


def _write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_canonical(obj))


def _thresholds_or_none(params):
    r_s = model.compute_rs(params)
    out = {"r_s": r_s, "r0": None, "mu_star": None}
    if r_s > 0:
        out["r0"] = model.compute_r0(params)
        out["mu_star"] = model.mu_star(params)
    return out


def _rh_dict(rh):
    return {"coefficients": dict(rh.coeffs), "flags": dict(rh.flags), "stable": rh.stable}


def _report_dict(report):
    return {
        "kind": report.kind,
        "point": _state_dict(report.point),
        "r0": report.r0,
        "r_s": report.r_s,
        "routh_hurwitz": _rh_dict(report.routh_hurwitz),
        "jacobian_eigen_real_parts": list(report.eigen_real_parts),
        "verdict": report.verdict,
    }


def _trajectory_summary(params, traj):
    info = {
        "terminal": {"t": float(traj.times[-1]), **_state_dict(traj.terminal)},
        "converged": None,
        "peaks": {k: {"t": t, "value": v} for k, (t, v) in traj.peaks.items()},
        "bounds": None,
    }
    if traj.converged_to is not None:
        state, t = traj.converged_to
        info["converged"] = {"t": t, **_state_dict(state)}
    if model.compute_rs(params) > 0 and min(params.mu, params.delta) > 0 and params.c > 0:
        rep = check_bounds(params, traj)
        info["bounds"] = {
            "passed": rep.passed,
            "mode": rep.mode,
            "checked_from": rep.checked_from,
            "violation": None if rep.violation is None else dict(zip(("t", "quantity", "value", "bound"), rep.violation)),
        }
    return info


def _equilibria_dict(params):
    out = {"disease_free": _state_dict(model.disease_free_equilibrium(params)), "endemic": None}
    try:
        out["endemic"] = _state_dict(model.endemic_equilibrium(params))
    except (NonexistenceError, ThresholdViolationError) as exc:
        out["endemic_absent_reason"] = str(exc)
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_config(cfg, args):
    sys.stdout.write(dump_config(cfg))


def cmd_simulate(cfg, args):
    os.makedirs(args.output_dir, exist_ok=True)
    runs = [("", cfg.params)]
    if args.compare_recycling:
        runs.append(("_no_recycling", cfg.params.replace(gamma=0.0)))
    summary = {"backend": _backend.BACKEND, "config": cfg.to_dict(), "runs": {}}
    for suffix, params in runs:
        traj = simulate(params, cfg.initial_state, cfg.sim)
        path = os.path.join(args.output_dir, f"trajectory{suffix}.csv")
        write_trajectory_csv(traj, path)
        entry = {"trajectory_csv": path, "params": params.to_dict(), **_thresholds_or_none(params)}
        entry["equilibria"] = _equilibria_dict(params)
        entry.update(_trajectory_summary(params, traj))
        summary["runs"]["no_recycling" if suffix else "main"] = entry
    _write_json(os.path.join(args.output_dir, "summary.json"), summary)
    main = summary["runs"]["main"]
    print(f"r_s = {main['r_s']:.6g}, R0 = {main['r0'] if main['r0'] is None else format(main['r0'], '.6g')}; "
          f"wrote {main['trajectory_csv']}")


def cmd_equilibria(cfg, args):
    params = cfg.params
    r_s = model.compute_rs(params)
    if not r_s > 0:
        raise ThresholdViolationError(r_s)
    report = {
        "params": params.to_dict(),
        "r_s": r_s,
        "r0": model.compute_r0(params),
        "mu_star": model.mu_star(params),
        "invariant_bounds": dict(zip(("X+Y", "D", "V"), model.invariant_bounds(params))),
        "disease_free": _report_dict(model.analyze_disease_free(params)),
        "endemic": None,
    }
    try:
        report["endemic"] = _report_dict(model.analyze_endemic(params))
    except NonexistenceError as exc:
        report["endemic_absent_reason"] = str(exc)
    os.makedirs(args.output_dir, exist_ok=True)
    path = os.path.join(args.output_dir, "equilibria.json")
    _write_json(path, report)
    sys.stdout.write(dumps_canonical(report))


def _pool_map(fn, items, jobs):
    if jobs <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def cmd_sweep(cfg, args):
    if not args.values:
        raise UsageError("--values must list at least one value")
    base = cfg.params

    def run(value):
        try:
            params = base.replace(**{args.param: value})
            return value, params, simulate(params, cfg.initial_state, cfg.sim), None
        except ModelError as exc:
            return value, None, None, f"{type(exc).__name__}: {exc}"

    results = _pool_map(run, args.values, args.jobs)
    os.makedirs(args.output_dir, exist_ok=True)
    path = os.path.join(args.output_dir, "sweep.csv")
    summary = {"param": args.param, "values": [], "failures": []}
    with open(path, "w", newline="\n") as fh:
        fh.write("sweep_value,t,X,Y,D,V\n")
        for value, params, traj, err in results:
            if err is not None:
                summary["failures"].append({"value": value, "error": err})
                continue
            for t, row in zip(traj.times, traj.states):
                fh.write(",".join(format(float(q), ".17g") for q in (value, t, *row)) + "\n")
            entry = {"value": value, **_thresholds_or_none(params),
                     "terminal": _state_dict(traj.terminal)}
            summary["values"].append(entry)
    _write_json(os.path.join(args.output_dir, "sweep_summary.json"), summary)
    print(f"{len(summary['values'])} runs, {len(summary['failures'])} failures; wrote {path}")


def _parse_free(specs, params):
    if not specs:
        return {n: (params.get(n) / 10.0, params.get(n) * 10.0) for n in ("k", "beta")}
    free = {}
    for spec in specs:
        parts = spec.split(":")
        if len(parts) != 3 or parts[0] not in PARAM_NAMES:
            raise UsageError(f"--free expects NAME:LOW:HIGH with NAME in {', '.join(PARAM_NAMES)}, got {spec!r}")
        try:
            free[parts[0]] = (float(parts[1]), float(parts[2]))
        except ValueError:
            raise UsageError(f"--free bounds must be numbers, got {spec!r}") from None
    return free


def cmd_fit(cfg, args):
    for path in args.datasets:
        if not os.path.exists(path):
            raise UsageError(f"dataset not found: {path}")
    datasets = [estimation.read_dataset_csv(p, label=os.path.splitext(os.path.basename(p))[0])
                for p in args.datasets]
    free = _parse_free(args.free, cfg.params)
    fixed = {n: cfg.params.get(n) for n in PARAM_NAMES if n not in free}
    if args.fit_initial == "estimate":
        initial = "estimate"
    else:
        initial = INITIAL_PRESETS.get(args.fit_initial)
        if initial is None:
            raise UsageError(f"--fit-initial must be 'estimate' or one of {', '.join(INITIAL_PRESETS)}")
    opt = estimation.OptimizerConfig(restarts=args.restarts, seed=cfg.seed)

    def run(ds):
        horizon = max(estimation.FIT_SIM_CONFIG.t_end, float(np.ceil(ds.times[-1])))
        sim = dataclasses.replace(estimation.FIT_SIM_CONFIG, t_end=horizon)
        problem = estimation.FitProblem(ds, free, fixed, initial, args.objective, sim)
        return estimation.fit(problem, opt)

    results = _pool_map(run, datasets, args.jobs)
    os.makedirs(args.output_dir, exist_ok=True)
    for res in results:
        path = os.path.join(args.output_dir, f"fit_{res.label}.json")
        _write_json(path, res.to_json_dict())
        print(f"{res.label}: sse = {res.sse:.6g} ({res.objective_space}), converged = {res.converged}")
    if args.average:
        avg = estimation.average_params(results)
        _write_json(os.path.join(args.output_dir, "average_params.json"),
                    {"params": avg.to_dict(), "datasets": [r.label for r in results]})


def cmd_gsa(cfg, args):
    initial = _parse_initial(args.gsa_initial)
    initial = INITIAL_PRESETS[initial] if isinstance(initial, str) else initial
    sim = cfg.sim
    if sim.t_end < args.query_time:
        sim = dataclasses.replace(sim, t_end=args.query_time)
    result = sensitivity.run_gsa(cfg.params, sim, n=args.n, seed=cfg.seed, query_time=args.query_time,
                                 initial=initial, fraction_low=args.low, fraction_high=args.high,
                                 jobs=args.jobs)
    os.makedirs(args.output_dir, exist_ok=True)
    sensitivity.write_prcc_csv(result, os.path.join(args.output_dir, "prcc.csv"))
    sensitivity.write_design_csv(result.design, os.path.join(args.output_dir, "design.csv"))
    sensitivity.write_scatter_csvs(result, os.path.join(args.output_dir, "scatter"))
    _write_json(os.path.join(args.output_dir, "gsa_summary.json"), {
        "n": args.n,
        "seed": cfg.seed,
        "query_time": args.query_time,
        "failures": result.failures,
        "degenerate": [list(p) for p in result.degenerate],
        "warnings": result.warnings,
    })
    for comp in result.outputs:
        order = sorted(result.parameters, key=lambda n: -np.nan_to_num(result.value(n, comp), nan=-2))
        print(f"{comp}: " + ", ".join(f"{n}={result.value(n, comp):+.3f}" for n in order))


def cmd_elasticity(cfg, args):
    rows = model.elasticity_table(cfg.params)
    os.makedirs(args.output_dir, exist_ok=True)
    path = os.path.join(args.output_dir, "elasticity.csv")
    with open(path, "w", newline="\n") as fh:
        fh.write("parameter,elasticity\n")
        for r in rows:
            fh.write(f"{r.wrt},{r.value:.17g}\n")
    for r in rows:
        print(f"{r.wrt:>7s} {r.value:+.5f}")


COMMANDS = {
    "config": cmd_config,
    "simulate": cmd_simulate,
    "equilibria": cmd_equilibria,
    "sweep": cmd_sweep,
    "fit": cmd_fit,
    "gsa": cmd_gsa,
    "elasticity": cmd_elasticity,
}


def _fail(args_error_json, code, exc):
    message = str(exc)
    if args_error_json:
        print(json.dumps({"error": type(exc).__name__, "message": message, "exit_code": code}))
    else:
        print(f"hbvcapsid: error: {message}", file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg, args)
    except (UsageError, InvalidInputError, ThresholdViolationError, NonexistenceError, OSError) as exc:
        return _fail(args.error_json, EXIT_USAGE, exc)
    except (SimulationError, FitFailureError, DegenerateOutputError, ModelError, FloatingPointError) as exc:
        return _fail(args.error_json, EXIT_NUMERIC, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
