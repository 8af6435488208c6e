"""Fixed-step RK4 simulation with trajectory recording and invariant checks."""

from __future__ import annotations

import dataclasses
import math
from typing import Optional

import numpy as np

from . import _backend
from .errors import InvalidInputError, NegativityError, SimulationOverflowError
from .model import invariant_bounds
from .params import COMPARTMENTS, ModelParams, State, as_state

NEGATIVITY_TOL = 1e-9
CONVERGENCE_WINDOW = 50
MAX_STEPS = 10**8
POLICIES = ("reject", "clamp-to-zero")


@dataclasses.dataclass(frozen=True)
class SimConfig:
    """Integration horizon and recording options.

    ``output_every`` records every n-th step; the terminal step is always
    recorded as well.
    """

    t_start: float = 0.0
    t_end: float = 500.0
    step: float = 0.01
    output_every: int = 100
    convergence_epsilon: float = 1e-6
    negativity_policy: str = "reject"

    def __post_init__(self):
        for name in ("t_start", "t_end", "step", "convergence_epsilon"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InvalidInputError(f"sim.{name} must be a finite number, got {value!r}")
            object.__setattr__(self, name, float(value))
        if isinstance(self.output_every, bool) or not isinstance(self.output_every, int) or self.output_every < 1:
            raise InvalidInputError(f"sim.output_every must be an integer >= 1, got {self.output_every!r}")
        if not self.step > 0.0:
            raise InvalidInputError(f"sim.step must be > 0, got {self.step!r}")
        if not self.t_end > self.t_start:
            raise InvalidInputError("sim.t_end must exceed sim.t_start")
        if self.convergence_epsilon < 0.0:
            raise InvalidInputError("sim.convergence_epsilon must be >= 0")
        if self.negativity_policy not in POLICIES:
            raise InvalidInputError(
                f"sim.negativity_policy must be one of {POLICIES}, got {self.negativity_policy!r}"
            )
        if (self.t_end - self.t_start) / self.step > MAX_STEPS:
            raise InvalidInputError(f"horizon needs more than {MAX_STEPS} steps")
        self.n_steps  # validates divisibility

    @property
    def n_steps(self):
        span = self.t_end - self.t_start
        n = round(span / self.step)
        if n < 1 or abs(n * self.step - span) > 1e-9 * span:
            raise InvalidInputError(
                f"horizon {span!r} is not an integer multiple of step {self.step!r}"
            )
        return n

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values):
        unknown = set(values) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise InvalidInputError(f"unknown sim key(s): {', '.join(sorted(unknown))}")
        return cls(**values)


@dataclasses.dataclass
class Trajectory:
    """Recorded states of one simulation.

    ``states`` has shape ``(len(times), 4)`` with columns X, Y, D, V.
    ``converged_to`` is ``(state, time)`` where ``time`` is the start of the
    first trailing window found to be stationary. ``peaks`` maps each
    compartment name to the ``(time, value)`` of its global maximum.
    """

    times: np.ndarray
    states: np.ndarray
    converged_to: Optional[tuple] = None
    peaks: dict = dataclasses.field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def terminal(self):
        return _state(self.states[-1])

    def state_at(self, index):
        return _state(self.states[index])

    def component(self, name):
        return self.states[:, COMPARTMENTS.index(name)]

    def to_csv(self, path):
        write_trajectory_csv(self, path)


def _state(row):
    return State(*(float(q) for q in row))


def rk4_step(params, state, h, backend=None):
    """One classical RK4 step of size ``h``."""
    if not isinstance(params, ModelParams):
        raise InvalidInputError("expected ModelParams")
    if not (math.isfinite(h) and h >= 0.0):
        raise InvalidInputError(f"step must be finite and >= 0, got {h!r}")
    y0 = np.array(as_state(state), dtype=float)
    out = np.empty((2, 4))
    kernel = _backend.get_kernel(backend)
    status, _, _ = kernel(np.array(params.as_tuple()), y0, float(h), 1, 1, False, math.inf, out)
    if status != 0:
        raise SimulationOverflowError(f"non-finite RK4 stage value over a step of size {h!r}", time=h)
    return _state(out[1])


def simulate(params, initial, config=None, backend=None):
    """Integrate from ``initial`` over ``[config.t_start, config.t_end]``.

    Raises :class:`NegativityError` (reject policy) or
    :class:`SimulationOverflowError`, each carrying the offending time.
    """
    if not isinstance(params, ModelParams):
        raise InvalidInputError("expected ModelParams")
    config = SimConfig() if config is None else config
    y0 = as_state(initial)
    if not y0.is_nonnegative():
        raise InvalidInputError(f"initial state must be componentwise >= 0, got {tuple(y0)!r}")
    nsteps = config.n_steps
    every = config.output_every
    out = np.empty((nsteps // every + 2, 4))
    kernel = _backend.get_kernel(backend)
    status, fail_step, nrec = kernel(
        np.array(params.as_tuple()),
        np.array(y0, dtype=float),
        config.step,
        nsteps,
        every,
        config.negativity_policy == "clamp-to-zero",
        NEGATIVITY_TOL,
        out,
    )
    if status != 0:
        t_fail = config.t_start + fail_step * config.step
        if status == 1:
            raise NegativityError(
                f"state went negative beyond {NEGATIVITY_TOL:g} x scale at t = {t_fail:.6g}", time=t_fail
            )
        raise SimulationOverflowError(f"state became non-finite at t = {t_fail:.6g}", time=t_fail)

    steps = np.arange(nrec) * every
    steps[-1] = min(steps[-1], nsteps)
    times = config.t_start + steps * config.step
    states = out[:nrec].copy()
    return Trajectory(
        times=times,
        states=states,
        converged_to=detect_convergence(times, states, config.convergence_epsilon),
        peaks=find_peaks(times, states),
    )


def detect_convergence(times, states, epsilon, window=CONVERGENCE_WINDOW):
    """First trailing window over which every compartment is stationary.

    A window passes when ``max - min <= epsilon * scale`` in each
    compartment, where ``scale`` is the compartment's largest magnitude over
    the whole trajectory (so compartments decaying to zero do converge).
    Returns ``(State, time)`` at the window start, or ``None``.
    """
    n = len(times)
    if n < 2:
        return None
    window = min(window, n)
    view = np.lib.stride_tricks.sliding_window_view(states, window, axis=0)
    spread = view.max(axis=2) - view.min(axis=2)
    scale = np.abs(states).max(axis=0)
    ok = np.all(spread <= epsilon * scale, axis=1)
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        return None
    i = int(hits[0])
    return _state(states[i]), float(times[i])


def find_peaks(times, states):
    idx = np.argmax(states, axis=0)
    return {name: (float(times[i]), float(states[i, j])) for j, (name, i) in enumerate(zip(COMPARTMENTS, idx))}


@dataclasses.dataclass(frozen=True)
class BoundsReport:
    """Outcome of :func:`check_bounds`.

    ``mode`` is ``"invariant"`` when the initial state lies in the invariant
    set (every recorded state is checked) and ``"tail"`` otherwise (only the
    trailing 20% of the horizon). ``violation`` is ``None`` or
    ``(time, quantity, value, bound)``.
    """

    passed: bool
    mode: str
    checked_from: float
    violation: Optional[tuple] = None


def check_bounds(params, trajectory, slack=1e-6):
    """Check the recorded states against the limsup bounds of the invariant set."""
    bxy, bd, bv = invariant_bounds(params)
    s = trajectory.states
    quantities = (
        ("X+Y", s[:, 0] + s[:, 1], bxy),
        ("D", s[:, 2], bd),
        ("V", s[:, 3], bv),
    )
    x0 = s[0]
    inside = bool(np.all(x0 >= 0.0) and x0[0] + x0[1] <= bxy and x0[2] <= bd and x0[3] <= bv)
    t = trajectory.times
    if inside:
        start, mode = 0, "invariant"
    else:
        t_cut = t[0] + 0.8 * (t[-1] - t[0])
        start, mode = int(np.searchsorted(t, t_cut, side="left")), "tail"
    first = None
    for name, values, bound in quantities:
        bad = np.flatnonzero(values[start:] > bound * (1.0 + slack))
        if bad.size:
            i = start + int(bad[0])
            if first is None or t[i] < first[0]:
                first = (float(t[i]), name, float(values[i]), float(bound))
    return BoundsReport(passed=first is None, mode=mode, checked_from=float(t[start]), violation=first)


def write_trajectory_csv(trajectory, path):
    """Write ``t,X,Y,D,V`` rows with 17 significant digits."""
    with open(path, "w", newline="\n") as fh:
        fh.write("t,X,Y,D,V\n")
        for t, row in zip(trajectory.times, trajectory.states):
            fh.write(",".join(format(float(q), ".17g") for q in (t, *row)) + "\n")


def read_trajectory_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Trajectory(times=data[:, 0], states=data[:, 1:5])
