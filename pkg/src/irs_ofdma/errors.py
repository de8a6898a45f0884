"""Exception hierarchy shared across the package."""

from __future__ import annotations


class IrsOfdmaError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(IrsOfdmaError, ValueError):
    """An argument is outside the domain of the operation."""


class FeasibilityError(IrsOfdmaError):
    """A training design does not satisfy the rank conditions of an estimator."""


class RankDeficientError(IrsOfdmaError):
    """A least-squares system is numerically rank deficient.

    Attributes:
        cond: condition-number estimate of the offending matrix (``inf`` when
            the matrix is exactly singular).
    """

    def __init__(self, message: str, cond: float = float("inf")):
        super().__init__(f"{message} (condition number {cond:.3e})")
        self.cond = cond


class CapacityError(IrsOfdmaError):
    """Not enough free pilot tones to serve the requested users.

    Attributes:
        user: index of the first user that could not be served.
    """

    def __init__(self, message: str, user: int | None = None):
        super().__init__(message)
        self.user = user


class InstanceTooLargeError(IrsOfdmaError):
    """An exhaustive search would enumerate more candidates than allowed."""

    def __init__(self, message: str, count: int):
        super().__init__(message)
        self.count = count


class ConfigError(IrsOfdmaError, ValueError):
    """Experiment configuration is malformed or infeasible.

    Attributes:
        field: the offending configuration key, when known.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
