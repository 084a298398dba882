"""Exception types raised across the package."""


class NcvemError(Exception):
    """Base class for all package errors."""


class DegenerateGeometry(NcvemError, ValueError):
    """A polygon or edge is too small or badly shaped to work with."""


class NotPositiveDefinite(NcvemError, ArithmeticError):
    """A matrix expected to be SPD has a non-positive pivot."""


class NotSymmetric(NcvemError, ValueError):
    """A matrix expected to be symmetric is not."""


class SingularProjector(NcvemError, ArithmeticError):
    """The elliptic projector system is rank deficient."""


class SingularSaddle(NcvemError, ArithmeticError):
    """The saddle system defining a generalized inverse is singular."""


class SingularGram(NcvemError, ArithmeticError):
    """A Gram matrix that must be invertible is singular."""


class DomainError(NcvemError, ValueError):
    """An argument lies outside the domain of a function."""


class BadLength(NcvemError, ValueError):
    """A signal length is not an admissible power of two."""


class LevelOverflow(NcvemError, ValueError):
    """An auxiliary dyadic grid would need too many levels."""


class SolveFailure(NcvemError, ArithmeticError):
    """A linear solve did not reach the requested residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigError(NcvemError, ValueError):
    """Invalid experiment configuration."""
