"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: validation errors exit 2, numerical
divergence exits 3, infeasible fits exit 4.
"""


class CascadePDEError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(CascadePDEError, ValueError):
    """Input violates a documented precondition or type invariant."""


class ParseError(ValidationError):
    """A record in an input file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(ValidationError):
    """Argument lies outside the domain of a function."""


class DivergenceError(CascadePDEError, ArithmeticError):
    """Time stepping failed: non-finite values or step halving exhausted."""

    def __init__(self, message, t=None, dt=None):
        self.t = t
        self.dt = dt
        super().__init__(message)


class NumericalConsistencyError(DivergenceError):
    """A computed quantity contradicts a structural property of the model."""


class FitError(CascadePDEError):
    """Calibration could not proceed (bad initial guess or every evaluation failed)."""


class EstimationError(CascadePDEError, ValueError):
    """A derived statistic (front speed, bracket) cannot be estimated."""


class NoMinimumError(CascadePDEError, ValueError):
    """Phi(lambda) has no interior minimum on the bracketing range."""


class NoWaveError(CascadePDEError, ValueError):
    """Parameters admit no travelling wave / invasion (e.g. R0 <= 1)."""
