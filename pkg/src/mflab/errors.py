"""Exception types shared across the package."""


class MflabError(Exception):
    """Base class for all package errors."""


class ParameterError(MflabError, ValueError):
    """An argument violates a documented precondition."""


class SingularityError(MflabError, ValueError):
    """The Coulomb kernel was evaluated at (or between) coincident points."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class EvaluationError(MflabError, ArithmeticError):
    """A user-supplied field produced a non-finite value at a quadrature node."""


class IntegrationAbort(MflabError, RuntimeError):
    """Time integration stopped: energy drift, collision floor or step underflow."""

    def __init__(self, message, t=None, diagnostic=None):
        super().__init__(message)
        self.t = t
        self.diagnostic = diagnostic or {}


class ConfigError(MflabError, ValueError):
    """Experiment configuration failed validation."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
