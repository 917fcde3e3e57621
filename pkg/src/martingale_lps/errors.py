"""Exception types raised across the package."""


class LPSError(Exception):
    """Base class for all package errors."""


class DomainError(LPSError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(LPSError, ValueError):
    """Inputs are individually valid but incompatible with each other."""


class RangeError(LPSError, OverflowError):
    """A requested quantity is not representable in binary64."""


class ConstructionError(LPSError, ArithmeticError):
    """A sequence construction produced data violating its invariants."""


class AccuracyError(LPSError, ArithmeticError):
    """A numerical method failed to reach its accuracy target.

    ``achieved`` holds the best error bound obtained before giving up.
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class InvariantViolation(LPSError, AssertionError):
    """A proven inequality failed on computed data; ``record`` describes the failure."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record
