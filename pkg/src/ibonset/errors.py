"""Exception hierarchy shared by all modules."""


class IBOnsetError(Exception):
    """Base class for errors raised by this package."""


class InvalidDistributionError(IBOnsetError, ValueError):
    """A probability table failed its normalization or sign checks."""


class NoOnsetError(IBOnsetError):
    """X and Y are (numerically) independent, so there is no learning onset."""


class ConvergenceError(IBOnsetError):
    """An iterative solver could not produce a usable fixed point."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class HigherOrderRequiredError(IBOnsetError):
    """The curvature kappa is not positive; the second-order theory does not fix the scale."""

    def __init__(self, message, kappa):
        super().__init__(message)
        self.kappa = kappa
