"""Exception types shared across the package.

The CLI maps these onto exit codes: validation/parse failures exit 2,
I/O failures (plain ``OSError``) exit 3, bad parameters exit 4.
"""

from __future__ import annotations


class TraceValidationError(ValueError):
    """A trace (or a record inside one) violates a data-model invariant."""


class TraceParseError(TraceValidationError):
    """Malformed trace input. Carries the 1-based source line when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ParameterError(ValueError):
    """An operation was invoked with out-of-range or inconsistent parameters."""
