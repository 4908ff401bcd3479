"""Shared exception types.

The CLI maps these onto exit codes: DataFormatError -> 2,
InfeasibleSpecError -> 3, anything else unexpected -> nonzero with traceback.
"""


class A2TError(Exception):
    """Base class for all toolkit errors."""


class DataFormatError(A2TError):
    """Malformed or inconsistent input data (bad record, duplicate id, ...)."""


class InfeasibleSpecError(A2TError):
    """A split/quota specification cannot be satisfied by the given pool."""


class JudgmentValidationError(A2TError):
    """A submitted judgment violates its type invariants or assignment rules."""


class UndefinedStatisticError(A2TError):
    """A statistic is undefined for the given input (e.g. zero variance)."""
