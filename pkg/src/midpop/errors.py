"""Exception types shared across the package."""


class MidpopError(Exception):
    """Base class for all package-specific errors."""


class DomainError(MidpopError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ArityError(MidpopError, ValueError):
    """A vector argument is too short for the requested order."""


class UnsupportedRateError(MidpopError, RuntimeError):
    """The selection rate lacks the structure or metadata an operation needs."""


class DegenerateStateError(MidpopError, ValueError):
    """A state has no mass or is otherwise unusable."""


class ConcentrationError(MidpopError, ValueError):
    """The state is a point mass; the standardized profile is undefined."""


class ExtinctionError(MidpopError, RuntimeError):
    """All particle weights underflowed to zero."""


class ClosureBreakdownError(MidpopError, RuntimeError):
    """The moment closure produced an inconsistent moment set."""


class MomentMismatchError(MidpopError, ValueError):
    """Two laws passed to a Fourier metric do not share the required moments."""


class ConfigError(MidpopError, ValueError):
    """A scenario configuration is malformed or incomplete."""


class HypothesisViolationError(ConfigError):
    """A scenario or envelope violates the hypotheses of the result it encodes."""


class SolverAbortError(MidpopError, RuntimeError):
    """A solver detected NaN/overflow and stopped.

    Carries the simulation time at which the problem was detected.
    """

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t
