"""Exception hierarchy shared across the package."""


class FlowFillError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(FlowFillError, ValueError):
    pass


class DataError(FlowFillError):
    """Bad or missing input data (files, sizes, formats)."""


class ConvergenceError(FlowFillError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DegenerateAlignmentError(FlowFillError):
    """Too few feature matches or inliers to fit a homography."""


class IterationBudgetError(FlowFillError):
    """The completion loop stopped with pixels still missing."""

    def __init__(self, message, missing=0):
        super().__init__(message)
        self.missing = missing
