"""Exception types shared across the package."""

from __future__ import annotations


class CstransError(Exception):
    """Base class for all package-specific errors."""


class InvalidKnotsError(CstransError, ValueError):
    """Knot sequence is not strictly increasing or otherwise malformed."""


class DomainError(CstransError, ValueError):
    """An evaluation point or covariate lies outside a basis domain."""


class ShapeError(CstransError, ValueError):
    """Array dimensions do not match the model layout."""


class InvalidShapeParameterError(CstransError, ValueError):
    """Link-family shape parameter outside its valid range."""


class DegenerateDataError(CstransError, ValueError):
    """Dataset cannot identify the model (e.g. all status indicators equal)."""


class NonConvergenceError(CstransError, RuntimeError):
    """Optimizer failed to converge; carries the log-likelihood trace."""

    def __init__(self, message: str, trace: list[float] | None = None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class SingularInformationError(CstransError, RuntimeError):
    """Information matrix is singular beyond the ridge fallback."""


class HarnessError(CstransError, RuntimeError):
    """Monte Carlo harness failed (too many failed replicates)."""


class DataFormatError(CstransError, ValueError):
    """Input file violates the expected schema.

    ``line`` and ``column`` are 1-based positions in the offending file when
    known.
    """

    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column!r})" if column else ")")
        super().__init__(message + loc)
        self.line = line
        self.column = column


class ConfigError(CstransError, ValueError):
    """Run configuration is invalid or contains unknown keys."""
