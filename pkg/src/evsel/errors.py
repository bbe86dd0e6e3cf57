"""Exception hierarchy.

Two families matter to callers: :class:`DataError` (bad inputs, malformed
files, degenerate labels) and :class:`NumericalError` (solver failures,
degenerate fits, non-convergence).  The CLI maps them to exit codes 2 and 3.
"""


class EvselError(Exception):
    """Base class for all package errors."""


class DataError(EvselError, ValueError):
    """Invalid input data, shapes or file contents."""


class FormatError(DataError):
    """A binary or text file does not match its declared format."""

    def __init__(self, message, path=None, offset=None):
        self.path = path
        self.offset = offset
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class DegenerateClassError(DataError):
    """A class column is all-zero / all-one, or carries no signal (Xy = 0)."""


class NumericalError(EvselError, ArithmeticError):
    """A numerical procedure failed."""


class DegenerateFitError(NumericalError):
    """The residual term vanishes: the class is interpolated exactly."""


class ConvergenceError(NumericalError):
    """An optimizer did not converge and the caller did not accept that."""
