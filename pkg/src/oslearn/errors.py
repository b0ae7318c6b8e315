"""Exception hierarchy shared across the package."""


class OslearnError(Exception):
    """Base class for all package-specific errors."""


class ContractViolationError(OslearnError, ValueError):
    """A caller broke a documented precondition (shapes, ranges, config)."""


class NumericDomainError(OslearnError, ArithmeticError):
    """A computation left its numeric domain: non-finite values, singular or
    indefinite matrices where definiteness is required."""


class UnsupportedOperationError(OslearnError, RuntimeError):
    """An operation needs state that is not available, e.g. a population
    oracle on a model with no bound data-generating process."""


class SweepFailureError(OslearnError, RuntimeError):
    """Too many replications of a Monte Carlo sweep failed."""
