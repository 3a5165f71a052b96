"""Exception types shared across the package."""


class RankDeficiencyError(ValueError):
    """A matrix that must have a given numeric rank does not."""


class UndefinedMetricError(ValueError):
    """A normalized metric was requested with an identically-zero reference."""


class DivergenceError(ArithmeticError):
    """A simulation or discretization produced non-finite values.

    Carries ``step`` when the failure happened at a known recursion index.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class InnerSolverError(RuntimeError):
    """The convex subproblem solver failed; ``iteration`` is the outer index."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
