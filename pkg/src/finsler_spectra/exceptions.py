"""Exception types shared across the library."""


class NumericError(RuntimeError):
    """A numerical procedure produced non-finite or unusable results."""


class ConvergenceError(NumericError):
    """An iteration failed to reach its tolerance.

    Carries the best iterate and its residual so callers can inspect or
    salvage partial results.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
