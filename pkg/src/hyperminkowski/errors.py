"""Exception hierarchy shared by all modules."""


class MinkowskiError(Exception):
    """Base class for every error raised by this package."""


class GridError(MinkowskiError, ValueError):
    """Unsupported dimension, resolution or stencil order."""


class SpacelikeViolation(MinkowskiError):
    """A de Sitter graph has |Du| >= 1 somewhere."""


class NonpositiveRadius(MinkowskiError):
    """A hyperbolic graph has a non-positive geodesic radius."""


class DomainError(MinkowskiError, ValueError):
    """Curvature function evaluated outside the positive cone."""


class NotOnHyperboloid(MinkowskiError, ValueError):
    pass


class OutsideBall(MinkowskiError, ValueError):
    pass


class NotStrictlyConvex(MinkowskiError):
    pass


class NormalNotFutureDirected(MinkowskiError):
    pass


class NewtonDivergence(MinkowskiError):
    pass


class BeltramiPointNotInterior(MinkowskiError):
    pass


class NoBarrier(MinkowskiError):
    pass


class StepCollapse(MinkowskiError):
    """Time step fell below the floor while trying to keep invariants."""


class InvariantBreach(MinkowskiError):
    pass


class NotConverged(MinkowskiError):
    """Flow stopped before reaching the tolerance; carries the partial result."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ConfigError(MinkowskiError, ValueError):
    pass


class StageError(MinkowskiError):
    """Wraps an error raised inside one pipeline stage."""

    def __init__(self, stage, error):
        super().__init__(f"stage '{stage}' failed: {error}")
        self.stage = stage
        self.error = error
