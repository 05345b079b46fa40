"""Exception hierarchy.

Data problems and solver problems are kept apart so the command line can map
them to different exit codes.
"""


class FPClusterError(Exception):
    """Base class for all errors raised by this package."""


class DataError(FPClusterError, ValueError):
    """Input data could not be parsed or violates a dataset invariant."""


class SolverError(FPClusterError, RuntimeError):
    """A clustering run or index evaluation could not complete."""


class DegenerateClusterError(SolverError):
    """A cluster collapsed: zero total weight, zero scatter, or a center
    sitting on the mean of all centers."""


class NumericalError(SolverError):
    """A non-finite value appeared during iteration."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
