class FuturesModelError(Exception):
    """Base class for every error raised by the futures toolkit."""


class ModelDomainError(FuturesModelError, ValueError):
    """A spot level, time or schedule lies outside where a formula is defined."""


class ParameterError(FuturesModelError, ValueError):
    """A value type was constructed with parameters that break its invariants."""


class CalibrationError(FuturesModelError):
    """The observed curve cannot determine the requested parameters."""


class ConfigError(FuturesModelError):
    """A run config file or command-line override could not be parsed."""


class ValidationError(FuturesModelError):
    """Inputs failed their validations before a command was dispatched."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "validation failed")


class ConvergenceError(FuturesModelError, RuntimeError):
    """Projected SOR hit its iteration cap before meeting the tolerance."""

    def __init__(self, message, iterations, residual, step=None):
        self.iterations = iterations
        self.residual = residual
        self.step = step
        super().__init__(message)
