"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: usage errors exit 1,
DataError exits 2, NumericalError exits 3.
"""


class CausalPchError(Exception):
    """Base class for all package errors."""


class DataError(CausalPchError):
    """Invalid input: data file, column contents, formula/config mismatch."""


class FormulaError(DataError):
    """Formula text failed to parse. Carries the 0-based character offset."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at position {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(CausalPchError):
    """Numerical failure: excessive divergences, non-convergence, bad initialization."""
