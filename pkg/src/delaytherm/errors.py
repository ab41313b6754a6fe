"""Exception hierarchy shared across the package."""


class DelayThermError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(DelayThermError, ValueError):
    pass


class InstabilityError(DelayThermError):
    """Raised when a steady-state quantity is requested for an unstable system."""


class IndeterminateStabilityError(DelayThermError):
    pass


class NumericalInconsistencyError(DelayThermError):
    """A closed-form evaluation left an imaginary residue above threshold.

    Attributes
    ----------
    value : complex
        The raw closed-form result.
    residue : float
        Relative size of the imaginary part.
    """

    def __init__(self, message, value=None, residue=None):
        super().__init__(message)
        self.value = value
        self.residue = residue


class AccuracyError(DelayThermError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DomainError(DelayThermError, ValueError):
    """Parameters lie outside the validity domain of an asymptotic formula."""


class InvalidMomentsError(DelayThermError, ValueError):
    pass


class UndefinedCorrelationError(DelayThermError, ValueError):
    pass


class DegenerateCovarianceError(DelayThermError, ValueError):
    pass


class SingularBoundError(DelayThermError, ZeroDivisionError):
    pass


class DivergenceError(DelayThermError):
    """A trajectory left the overflow guard.

    Attributes
    ----------
    step : int
        Index of the integration step at which ``|q|`` exceeded the guard.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class EnsembleError(DelayThermError):
    def __init__(self, message, failed=()):
        super().__init__(message)
        self.failed = list(failed)


class InsufficientDataError(DelayThermError, ValueError):
    pass


class DegenerateBandError(DelayThermError, ValueError):
    pass


class ZeroVarianceError(DelayThermError, ValueError):
    pass


class FitWindowError(DelayThermError):
    pass


class NonIdentifiableError(DelayThermError):
    pass


class JoinError(DelayThermError):
    def __init__(self, message, orphans=()):
        super().__init__(message)
        self.orphans = list(orphans)


class ConfigError(DelayThermError, ValueError):
    """Invalid run configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
