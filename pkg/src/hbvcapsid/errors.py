"""Exception hierarchy shared by every module of the package."""


class ModelError(Exception):
    """Base class for all errors raised by :mod:`hbvcapsid`."""


class InvalidInputError(ModelError, ValueError):
    """A parameter or state value is non-finite, negative or out of range."""


class DegenerateParameterError(InvalidInputError):
    """A parameter that appears as a divisor is zero."""


class ThresholdViolationError(ModelError):
    """The boundedness threshold ``R_s`` is not positive.

    Closed forms for R0, the equilibria and the invariant set only hold
    when ``R_s > 0``, i.e. ``gamma < (alpha*beta + delta) / (1 - alpha)``.
    """

    def __init__(self, r_s, message=None):
        self.r_s = r_s
        if message is None:
            message = (
                f"boundedness threshold R_s = {r_s:.6g} <= 0; "
                "lower gamma below (alpha*beta + delta)/(1 - alpha)"
            )
        super().__init__(message)


class NonexistenceError(ModelError):
    """The endemic equilibrium does not exist (R0 <= 1)."""

    def __init__(self, r0, message=None):
        self.r0 = r0
        if message is None:
            message = f"endemic equilibrium requires R0 > 1, got R0 = {r0:.6g}"
        super().__init__(message)


class DomainError(InvalidInputError):
    """A state lies outside the domain of a logarithmic functional."""


class SimulationError(ModelError):
    """Base class for failures raised while integrating the system."""

    def __init__(self, message, time):
        self.time = time
        super().__init__(message)


class NegativityError(SimulationError):
    """A compartment went negative beyond the configured tolerance."""


class SimulationOverflowError(SimulationError):
    """A state or stage value became non-finite."""


class FitFailureError(ModelError):
    """No optimizer restart produced a finite objective value."""


class DegenerateRangeError(InvalidInputError):
    """An LHS sampling range collapsed to a single point."""


class DegenerateOutputError(ModelError):
    """A rank column has (numerically) zero residual variance."""
