"""Exception types shared across the package."""


class CollateralOptError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(CollateralOptError):
    """A data file violates its schema; message carries file and line context."""

    def __init__(self, message, path=None, line=None):
        if path is not None and line is not None:
            message = f"{path}:{line}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
        self.line = line


class CoverageError(CollateralOptError):
    """A symbol or vault type lacks data for part of the requested range."""


class DomainError(CollateralOptError):
    """An input value lies outside its mathematical domain."""


class InsufficientDataError(CollateralOptError):
    """Too few observations to perform the requested computation."""


class InfeasibleError(CollateralOptError):
    """The constraint set is empty (e.g. weight caps sum to less than 1)."""


class UndefinedRatioError(DomainError):
    """A ratio with zero denominator was requested."""


class EmptyPortfolioError(CollateralOptError):
    """A portfolio extraction produced no assets."""
