"""Closed-form analysis of the capsid-recycling hepatitis B model.

The system is::

    X' = lam - mu X - k V X
    Y' = k V X - delta Y
    D' = a Y + gamma (1 - alpha) D - alpha beta D - delta D
    V' = alpha beta D - c V

Every function here is pure. Closed forms are arranged around the
boundedness threshold ``R_s = alpha beta - (1 - alpha) gamma + delta`` so
that the cancellation-prone expansion ``c(alpha beta delta - gamma delta +
...)`` is never formed.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import (
    DegenerateParameterError,
    DomainError,
    InvalidInputError,
    NonexistenceError,
    ThresholdViolationError,
)
from .params import PARAM_NAMES, ModelParams, State, as_state

STABLE = "locally-asymptotically-stable"
UNSTABLE = "unstable"
MARGINAL = "marginal"

#: Relative band (times the infinity norm of J) inside which an eigenvalue
#: real part counts as zero.
MARGINAL_TOL = 1e-12


def _check_params(params):
    if not isinstance(params, ModelParams):
        raise InvalidInputError(f"expected ModelParams, got {type(params).__name__}")
    return params


# ---------------------------------------------------------------------------
# Right-hand side and Jacobian
# ---------------------------------------------------------------------------

def rhs(params, state):
    """Time derivative of the four compartments at ``state``.

    Negative components are accepted; only non-finite input is rejected.
    The source and death terms are grouped as ``mu (lam/mu - X)`` so that
    the first component vanishes exactly at the disease-free state.
    """
    p = _check_params(params)
    x, y, d, v = as_state(state)
    if p.mu > 0.0:
        x0, lam_rem = p.lam / p.mu, 0.0
    else:
        x0, lam_rem = 0.0, p.lam
    return State(
        p.mu * (x0 - x) + lam_rem - p.k * v * x,
        p.k * v * x - p.delta * y,
        p.a * y + p.gamma * (1 - p.alpha) * d - p.alpha * p.beta * d - p.delta * d,
        p.alpha * p.beta * d - p.c * v,
    )


def rhs_terms(params, state):
    """The signed summands of each right-hand-side component.

    Used to form a characteristic magnitude for residual checks.
    """
    p = _check_params(params)
    x, y, d, v = as_state(state)
    return (
        (p.lam, -p.mu * x, -p.k * v * x),
        (p.k * v * x, -p.delta * y),
        (p.a * y, p.gamma * (1 - p.alpha) * d, -p.alpha * p.beta * d, -p.delta * d),
        (p.alpha * p.beta * d, -p.c * v),
    )


def rhs_residual(params, state):
    """Largest componentwise ``|f_i| / max|summand_i|`` at ``state``.

    A component whose summands all vanish contributes zero.
    """
    f = rhs(params, state)
    worst = 0.0
    for fi, terms in zip(f, rhs_terms(params, state)):
        scale = max(abs(t) for t in terms)
        if scale > 0.0:
            worst = max(worst, abs(fi) / scale)
        elif fi != 0.0:
            return math.inf
    return worst


def jacobian(params, state):
    """Analytic 4x4 Jacobian of :func:`rhs`, rows and columns ordered X, Y, D, V."""
    p = _check_params(params)
    x, _, _, v = as_state(state)
    ab = p.alpha * p.beta
    return np.array(
        [
            [-p.mu - p.k * v, 0.0, 0.0, -p.k * x],
            [p.k * v, -p.delta, 0.0, p.k * x],
            [0.0, p.a, p.gamma * (1 - p.alpha) - ab - p.delta, 0.0],
            [0.0, 0.0, ab, -p.c],
        ]
    )


# ---------------------------------------------------------------------------
# Thresholds
# ---------------------------------------------------------------------------

def compute_rs(params):
    """Boundedness threshold ``alpha beta - (1 - alpha) gamma + delta`` (1/day)."""
    p = _check_params(params)
    return p.alpha * p.beta - (1 - p.alpha) * p.gamma + p.delta


def _require_bounded(params):
    r_s = compute_rs(params)
    if not r_s > 0.0:
        raise ThresholdViolationError(r_s)
    return r_s


def _require_positive(params, *names):
    for name in names:
        if params.get(name) <= 0.0:
            raise DegenerateParameterError(f"parameter {name} must be > 0 here")


def compute_r0(params):
    """Basic reproduction number ``a k lam alpha beta / (mu c delta R_s)``."""
    p = _check_params(params)
    r_s = _require_bounded(p)
    _require_positive(p, "mu", "c", "delta")
    return p.a * p.k * p.lam * p.alpha * p.beta / (p.mu * p.c * p.delta * r_s)


def next_generation_matrices(params):
    """Transmission (F) and transition (V) Jacobians of the infected
    subsystem (Y, D, V) at the disease-free equilibrium.
    """
    p = _check_params(params)
    _require_positive(p, "mu")
    ab = p.alpha * p.beta
    f = np.zeros((3, 3))
    f[0, 2] = p.k * p.lam / p.mu
    v = np.array(
        [
            [p.delta, 0.0, 0.0],
            [-p.a, -p.gamma * (1 - p.alpha) + ab + p.delta, 0.0],
            [0.0, -ab, p.c],
        ]
    )
    return f, v


def mu_star(params):
    """Value of ``mu`` at which R0 = 1 (transcritical bifurcation point)."""
    p = _check_params(params)
    r_s = _require_bounded(p)
    _require_positive(p, "c", "delta")
    return p.a * p.k * p.alpha * p.beta * p.lam / (r_s * p.c * p.delta)


def invariant_bounds(params):
    """Limsup bounds on ``X + Y``, ``D`` and ``V`` with ``rho = min(mu, delta)``."""
    p = _check_params(params)
    r_s = _require_bounded(p)
    rho = min(p.mu, p.delta)
    if rho <= 0.0:
        raise DegenerateParameterError("min(mu, delta) must be > 0 for the invariant set")
    _require_positive(p, "c")
    xy = p.lam / rho
    d = p.a * p.lam / (rho * r_s)
    return (xy, d, d * p.alpha * p.beta / p.c)


@dataclasses.dataclass(frozen=True)
class Thresholds:
    r_s: float
    r0: float
    mu_star: float
    bounds: tuple


def thresholds(params):
    """All threshold quantities in one record."""
    return Thresholds(
        r_s=compute_rs(params),
        r0=compute_r0(params),
        mu_star=mu_star(params),
        bounds=invariant_bounds(params),
    )


# ---------------------------------------------------------------------------
# Equilibria
# ---------------------------------------------------------------------------

def disease_free_equilibrium(params):
    p = _check_params(params)
    if p.mu <= 0.0:
        raise DegenerateParameterError("disease-free equilibrium requires mu > 0")
    return State(p.lam / p.mu, 0.0, 0.0, 0.0)


def endemic_equilibrium(params, require_existence=True):
    """Positive steady state ``(X1, Y1, D1, V1)``.

    With ``require_existence=False`` the closed form is returned even when
    ``R0 <= 1`` (components then come out zero or negative).
    """
    p = _check_params(params)
    r_s = _require_bounded(p)
    _require_positive(p, "k", "a", "delta", "c")
    r0 = compute_r0(p)
    if require_existence and not r0 > 1.0:
        raise NonexistenceError(r0)
    ab = p.alpha * p.beta
    x1 = p.c * p.delta * r_s / (p.a * ab * p.k)
    y1 = (p.a * p.k * ab * p.lam - p.c * p.delta * p.mu * r_s) / (p.a * ab * p.delta * p.k)
    d1 = p.a * y1 / r_s
    v1 = p.a * ab * y1 / (p.c * r_s)
    return State(x1, y1, d1, v1)


# ---------------------------------------------------------------------------
# Stability
# ---------------------------------------------------------------------------

def characteristic_coefficients(matrix):
    """Coefficients ``[c1, ..., cn]`` of ``det(x I - M) = x^n + c1 x^(n-1) + ... + cn``.

    Faddeev-LeVerrier recursion; no eigenvalues are formed.
    """
    m = np.asarray(matrix, dtype=float)
    n = m.shape[0]
    ident = np.eye(n)
    coeffs = []
    aux = np.zeros_like(m)
    c_prev = 1.0
    for step in range(1, n + 1):
        aux = m @ aux + c_prev * ident
        c_prev = -np.trace(m @ aux) / step
        coeffs.append(float(c_prev))
    return coeffs


def classify_eigenvalues(matrix):
    """Return ``(real_parts, verdict)`` using the marginal band on ``||J||_inf``."""
    m = np.asarray(matrix, dtype=float)
    real = np.sort(np.linalg.eigvals(m).real)[::-1]
    tol = MARGINAL_TOL * np.linalg.norm(m, ord=np.inf)
    if np.all(real < -tol):
        verdict = STABLE
    elif np.any(real > tol):
        verdict = UNSTABLE
    else:
        verdict = MARGINAL
    return tuple(float(r) for r in real), verdict


@dataclasses.dataclass(frozen=True)
class RouthHurwitz:
    """Characteristic-polynomial coefficients and Routh-Hurwitz sign conditions."""

    coeffs: dict
    flags: dict

    def __post_init__(self):
        object.__setattr__(self, "coeffs", {k: float(v) for k, v in self.coeffs.items()})
        object.__setattr__(self, "flags", {k: bool(v) for k, v in self.flags.items()})

    @property
    def stable(self):
        return all(self.flags.values())


def routh_hurwitz_disease_free(params):
    """A1..A3 of the cubic governing the infected block at the disease-free state."""
    p = _check_params(params)
    r_s = _require_bounded(p)
    _require_positive(p, "mu")
    a1 = r_s + p.c + p.delta
    a2 = (p.delta + p.c) * r_s + p.c * p.delta
    a3 = p.c * p.delta * r_s - p.a * p.k * p.alpha * p.beta * p.lam / p.mu
    return RouthHurwitz(
        coeffs={"A1": a1, "A2": a2, "A3": a3},
        flags={
            "A1>0": a1 > 0,
            "A2>0": a2 > 0,
            "A3>0": a3 > 0,
            "A1*A2-A3>0": a1 * a2 - a3 > 0,
        },
    )


def routh_hurwitz_endemic(params):
    """B1..B4 read off the characteristic polynomial of J at the endemic state."""
    p = _check_params(params)
    point = endemic_equilibrium(p)
    b1, b2, b3, b4 = characteristic_coefficients(jacobian(p, point))
    return RouthHurwitz(
        coeffs={"B1": b1, "B2": b2, "B3": b3, "B4": b4},
        flags={
            "B1>0": b1 > 0,
            "B3>0": b3 > 0,
            "B4>0": b4 > 0,
            "B1*B2-B3>0": b1 * b2 - b3 > 0,
            "B1*B2*B3-B3^2-B1^2*B4>0": b1 * b2 * b3 - b3 * b3 - b1 * b1 * b4 > 0,
        },
    )


@dataclasses.dataclass(frozen=True)
class EquilibriumReport:
    kind: str
    point: State
    r0: float
    r_s: float
    routh_hurwitz: RouthHurwitz
    eigen_real_parts: tuple
    verdict: str


def analyze_disease_free(params):
    point = disease_free_equilibrium(params)
    real, verdict = classify_eigenvalues(jacobian(params, point))
    return EquilibriumReport(
        kind="disease-free",
        point=point,
        r0=compute_r0(params),
        r_s=compute_rs(params),
        routh_hurwitz=routh_hurwitz_disease_free(params),
        eigen_real_parts=real,
        verdict=verdict,
    )


def analyze_endemic(params):
    point = endemic_equilibrium(params)
    real, verdict = classify_eigenvalues(jacobian(params, point))
    return EquilibriumReport(
        kind="endemic",
        point=point,
        r0=compute_r0(params),
        r_s=compute_rs(params),
        routh_hurwitz=routh_hurwitz_endemic(params),
        eigen_real_parts=real,
        verdict=verdict,
    )


def stability_scan(params, mu_values):
    """Disease-free verdict for each value of ``mu``."""
    return [
        classify_eigenvalues(jacobian(params.replace(mu=m), disease_free_equilibrium(params.replace(mu=m))))[1]
        for m in mu_values
    ]


# ---------------------------------------------------------------------------
# Lyapunov functionals
# ---------------------------------------------------------------------------

def _g(u):
    # u - 1 - ln u, accurate near u = 1
    return (u - 1.0) - math.log(u) if abs(u - 1.0) > 1e-4 else _g_series(u - 1.0)


def _g_series(e):
    # ln(1+e) = e - e^2/2 + e^3/3 - e^4/4 + ...
    return e * e * (0.5 - e * (1.0 / 3.0 - e * (0.25 - e * 0.2)))


def lyapunov_l1(params, state):
    """Functional certifying the disease-free state when R0 <= 1."""
    p = _check_params(params)
    r_s = _require_bounded(p)
    _require_positive(p, "a", "mu")
    x, y, d, v = as_state(state)
    if x <= 0.0:
        raise DomainError(f"X must be > 0 for the logarithmic term, got {x!r}")
    x0 = p.lam / p.mu
    if x0 <= 0.0:
        raise DegenerateParameterError("lambda must be > 0 for the disease-free reference")
    weight_v = p.delta * r_s / (p.a * p.alpha * p.beta)
    return x0 * _g(x / x0) + y + p.delta / p.a * d + weight_v * v


def lyapunov_l2(params, state):
    """Functional certifying the endemic state when R0 > 1."""
    p = _check_params(params)
    point = endemic_equilibrium(p)
    r_s = compute_rs(p)
    s = as_state(state)
    if min(s) <= 0.0:
        raise DomainError(f"all components must be > 0, got {tuple(s)!r}")
    x1, y1, d1, v1 = point
    return (
        x1 * _g(s.x / x1)
        + y1 * _g(s.y / y1)
        + p.delta * d1 / p.a * _g(s.d / d1)
        + p.delta * r_s * v1 / (p.a * p.alpha * p.beta) * _g(s.v / v1)
    )


# ---------------------------------------------------------------------------
# Elasticities
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class ElasticityReport:
    wrt: str
    value: float


def elasticity_r0(params, wrt):
    """Elasticity ``(p / R0) dR0/dp`` of the closed-form R0."""
    p = _check_params(params)
    if wrt not in PARAM_NAMES:
        raise InvalidInputError(f"unknown parameter {wrt!r}; expected one of {', '.join(PARAM_NAMES)}")
    r_s = _require_bounded(p)
    if p.get(wrt) <= 0.0:
        raise DegenerateParameterError(f"elasticity needs {wrt} > 0")
    if wrt in ("lambda", "k", "a"):
        value = 1.0
    elif wrt in ("mu", "c"):
        value = -1.0
    elif wrt == "alpha":
        value = (p.delta - p.gamma) / r_s
    elif wrt == "beta":
        value = (p.delta - (1 - p.alpha) * p.gamma) / r_s
    elif wrt == "gamma":
        value = (1 - p.alpha) * p.gamma / r_s
    else:  # delta: -1 from the prefactor, -delta/R_s through R_s
        value = -1.0 - p.delta / r_s
    return ElasticityReport(wrt=wrt, value=value)


def elasticity_table(params):
    return [elasticity_r0(params, name) for name in PARAM_NAMES]
