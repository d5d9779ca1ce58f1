"""Exception hierarchy shared by every gausscov module."""

from typing import Optional


class GaussCovError(Exception):
    """Base class for all gausscov errors."""


class NotSymmetric(GaussCovError, ValueError):
    """Covariance matrix asymmetry exceeds the tolerance."""


class NotPSD(GaussCovError, ValueError):
    """Covariance matrix has an eigenvalue below the clamping threshold."""


class DimensionMismatch(GaussCovError, ValueError):
    """Array shapes disagree with the model or field dimension."""


class AlphaOutOfRange(GaussCovError, ValueError):
    """Interpolation parameter outside [0, 1]."""


class ExpressionSyntaxError(GaussCovError, ValueError):
    """Malformed expression text."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownIdentifier(GaussCovError, ValueError):
    """Identifier that is neither a variable nor a known function."""

    def __init__(self, name: str, position: Optional[int] = None):
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"Unknown identifier '{name}'{where}")
        self.name = name
        self.position = position


class VariableIndexOutOfRange(GaussCovError, ValueError):
    """Variable x_i with i outside [1, d]."""


class NonFiniteResult(GaussCovError, ArithmeticError):
    """Evaluation produced NaN or infinity."""


class NonPositiveInput(GaussCovError, ValueError):
    """A quantity required to be strictly positive was not."""


class MissingMeanPosPart(GaussCovError, ValueError):
    """improved_mean bound requested without an E(f - Ef)+ estimate."""


class InvalidBoundForField(GaussCovError, ValueError):
    """Bound kind not valid for the given field (strong_moment needs max_coord)."""


class ConfigError(GaussCovError, ValueError):
    """Invalid run configuration."""
