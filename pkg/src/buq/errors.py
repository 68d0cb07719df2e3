"""Exception hierarchy shared across the package."""

from __future__ import annotations


class BuqError(Exception):
    """Base class for all package errors."""


class ParseError(BuqError):
    """Input file could not be parsed."""


class ValidationError(BuqError):
    """Input data violates a table invariant (gap, bound, NaN)."""


class InsufficientData(BuqError):
    pass


class OutOfRange(BuqError):
    """A calendar block does not lie inside the table."""


class EmptyStratum(BuqError):
    """A resampling stratum has no candidate blocks."""


class SchemeError(BuqError):
    pass


class SpecError(BuqError):
    """Power system model specification is inconsistent."""


class SolverError(BuqError):
    pass


class NumericalError(SolverError):
    """Basis became numerically singular."""


class AdapterError(SolverError):
    """External solver process could not be run or its output parsed."""


class DegenerateInput(BuqError):
    pass


class TooManyFailures(BuqError):
    """Too many bootstrap sample solves failed."""


class InsufficientGrid(BuqError):
    pass


class ConfigError(BuqError):
    pass
