"""Exception hierarchy shared by every sfl module."""


class SFLError(Exception):
    """Base class for all errors raised by sfl."""


class DomainError(SFLError, ValueError):
    """An argument lies outside the domain of the operation."""


class PrecisionError(SFLError, OverflowError):
    """The requested computation needs more precision than allowed, or underflows it."""


class DegenerateFitError(SFLError, ArithmeticError):
    """A least-squares fit has no usable data points."""


class InsufficientScalesError(SFLError, ValueError):
    """Too few cascade scales resolve structure for a dimension fit."""
