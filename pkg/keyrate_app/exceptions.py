class KeyRateError(Exception):
    """Base class for every error raised by the key-rate engine."""


class ConfigError(KeyRateError):
    """The run configuration could not be parsed or failed validation."""

    def __init__(self, message, invariant=None):
        super().__init__(message)
        self.invariant = invariant


class ParameterError(KeyRateError, ValueError):
    """An argument lies outside the domain of an operation."""


class EstimationError(KeyRateError):
    """A decoy-state program could not certify a bound."""


class SolverError(KeyRateError):
    """Malformed linear program (dimension mismatch, inverted bounds)."""
