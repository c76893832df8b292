"""Package-wide exception types.

The CLI maps these onto exit codes: DataError -> 2, NumericError -> 3.
"""


class CrossupError(Exception):
    """Base class for all package errors."""


class DataError(CrossupError):
    """Malformed or inconsistent input data (bad file, violated invariant)."""


class EmptyIndexError(CrossupError):
    """A spatial index was built over, or queried with, an empty point set."""


class DegenerateNeighborhoodError(CrossupError):
    """A neighborhood has no usable extent (e.g. all points coincident)."""


class NumericError(CrossupError):
    """Non-finite values where finite ones are required (diverged loss, bad input)."""
