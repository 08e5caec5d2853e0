"""Exception hierarchy shared by all shapeflow modules."""


class ShapeflowError(Exception):
    """Base class for every error raised by this package."""


class OutOfDomain(ShapeflowError):
    """A sample point left the admissible region of a field source."""

    def __init__(self, message, point=None, index=None):
        super().__init__(message)
        self.point = point
        self.index = index


class NoConvergence(ShapeflowError):
    pass


class DegenerateGradient(ShapeflowError):
    pass


class DegenerateNormal(ShapeflowError):
    def __init__(self, message, vertices=()):
        super().__init__(message)
        self.vertices = tuple(vertices)


class NonManifoldVertex(ShapeflowError):
    def __init__(self, message, vertex=None):
        super().__init__(message)
        self.vertex = vertex


class InsufficientNeighbors(ShapeflowError):
    pass


class SingularFit(ShapeflowError):
    pass


class CurvatureError(ShapeflowError):
    """Aggregated per-vertex curvature failures.

    ``failures`` maps vertex id to the underlying exception.
    """

    def __init__(self, failures):
        self.failures = dict(failures)
        ids = sorted(self.failures)
        shown = ", ".join(str(i) for i in ids[:10])
        more = "" if len(ids) <= 10 else f" (+{len(ids) - 10} more)"
        super().__init__(f"curvature failed at {len(ids)} vertices: {shown}{more}")


class NonFiniteUpdate(ShapeflowError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ParseError(ShapeflowError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(ShapeflowError):
    pass
