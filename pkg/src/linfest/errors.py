"""Exception hierarchy shared across the package.

Input problems raise ValueError subclasses so callers can keep a single
`except ValueError` around schema/dimension checks; solver trouble raises
RuntimeError subclasses that carry the best iterate found so far.
"""


class DimensionMismatchError(ValueError):
    """Shapes of a set, map, functional or test function disagree."""


class DomainError(ValueError):
    """A parameter point lies outside the open domain of its family."""


class ValidationError(ValueError):
    """A problem description violates the schema or a cross-field invariant.

    ``path`` locates the offending field (e.g. ``channels[2].map.A``).
    """

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class InnerSolveError(RuntimeError):
    """An inner maximization did not reach its tolerance.

    Carries the best iterate and its residual for diagnostics.
    """

    def __init__(self, message, best_x=None, value=None, residual=None):
        super().__init__(message)
        self.best_x = best_x
        self.value = value
        self.residual = residual


class SolverCapError(RuntimeError):
    """Outer descent hit its iteration cap with the gap above tolerance.

    ``solution`` holds the best (non-certified) saddle solution found.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution
