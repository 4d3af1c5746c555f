"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes; library code raises them
directly and never calls sys.exit.
"""


class DimensionError(ValueError):
    """Array shapes do not conform (non-square input, length mismatch, ...)."""


class DomainError(ValueError):
    """Input lies outside the mathematical domain of an operation."""


class ParseError(ValueError):
    """A data file could not be parsed. Carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericError(RuntimeError):
    """A numerical procedure failed (singular system, non-finite result, ...)."""


class EmptyNeighborhoodError(NumericError):
    """No sample carries kernel mass at the query point."""


class ConvergenceError(NumericError):
    """An iteration exceeded its budget. Carries the last iterate."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class SelectionError(NumericError):
    """Bandwidth selection found no finite score on the grid."""


class EmbeddingError(NumericError):
    """The embedding problem is degenerate (e.g. all pairwise distances zero)."""
