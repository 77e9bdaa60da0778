"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2, numerical failures exit 3.
"""


class GcfBenchError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(GcfBenchError):
    """Bad invocation: unknown flag values, inconsistent options."""


class DataError(GcfBenchError):
    """Problems with input data files or dataset contents."""


class ParseError(DataError):
    """Malformed line in an interaction file. Carries the 1-based line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class EmptyDatasetError(DataError):
    """A dataset with zero interactions where at least one is required."""


class DependencyError(DataError):
    """A pipeline stage was asked to run before the artifacts it needs exist."""


class CapacityError(GcfBenchError):
    """An exact solver was asked to run above its configured size ceiling."""


class NumericalError(GcfBenchError):
    """Non-finite values showed up where finite numbers are required."""
