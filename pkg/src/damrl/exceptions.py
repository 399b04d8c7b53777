"""Exception hierarchy shared by every damrl module."""


class DamRLError(Exception):
    """Base class for all damrl errors."""


class DomainError(DamRLError, ValueError):
    """A physical quantity lies outside the range a model is defined on."""


class RankDeficientError(DamRLError, ValueError):
    """A regression design matrix does not have full column rank."""


class DegenerateForecastError(DamRLError, ArithmeticError):
    """A Kalman forecast variance collapsed to a non-positive value."""


class UndefinedNSEError(DamRLError, ValueError):
    """NSE requested for observations with zero variance."""


class DataFormatError(DamRLError, ValueError):
    """A data file is malformed. ``lineno`` points at the offending line."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class DivergenceError(DamRLError, FloatingPointError):
    """Training produced NaN losses or runaway Q-values."""
