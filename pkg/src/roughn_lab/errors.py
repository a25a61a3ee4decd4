"""Shared exception types.

Plain ValueError is used for generic bad arguments; the classes here mark
failure modes callers are expected to branch on.
"""


class TableTooSmallError(ValueError):
    """A prime table does not cover the range the operation needs."""


class OutOfRangeError(ValueError):
    """A query point lies outside the cached grid of a profile object."""


class EmptySupportError(ValueError):
    """A weight table would contain no admissible integers at all."""


class NumericFailureError(RuntimeError):
    """A quadrature or normalization produced a non-finite or non-positive value."""


class BudgetExceededError(RuntimeError):
    """An enumeration or search was stopped by its configured work budget."""


class ResumeMismatchError(RuntimeError):
    """A checkpoint was produced under a different configuration fingerprint."""
