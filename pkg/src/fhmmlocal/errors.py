"""Exception taxonomy shared by the whole package."""

from __future__ import annotations


class FhmmError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgumentError(FhmmError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateDistributionError(FhmmError):
    """A distribution lost all mass (zero normalizer, negative entry, ...)."""


class DegenerateStatisticsError(FhmmError):
    """Sufficient statistics do not identify a parameter update."""


class CapacityError(FhmmError):
    """A dense table would exceed the configured size cap."""


class UnsupportedQueryError(FhmmError):
    """The requested quantity is not resolvable from the given representation."""


class ParseError(FhmmError):
    """A text artifact could not be parsed.

    Carries the offending path and 1-based line number when known.
    """

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:" if line is None else f"{path}:{line}:"
        elif line is not None:
            where = f"line {line}:"
        super().__init__(f"{where} {message}" if where else message)
