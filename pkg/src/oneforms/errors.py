"""Exception types raised across the package."""


class GeometryError(Exception):
    """Base class for all errors raised by :mod:`oneforms`."""


class RankDeficient(GeometryError, ValueError):
    """A matrix that must have full column rank does not."""


class NotSPD(GeometryError, ValueError):
    """A matrix that must be symmetric positive-definite is not."""


class DegeneratePlane(GeometryError, ValueError):
    """Two tangent vectors do not span a 2-plane."""


class NotUnimodularTangent(GeometryError, ValueError):
    """Tangent vector at a unit-volume frame changes the volume."""


class WrongDimension(GeometryError, ValueError):
    pass


class NotMonotone(GeometryError, ValueError):
    pass


class NotImmersed(GeometryError, ValueError):
    """A discrete curve has a vanishing derivative at some node."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class BeyondBlowup(GeometryError, ValueError):
    """Evaluation requested at or past the time a geodesic leaves the space."""

    def __init__(self, message, blowup=None, node=None):
        super().__init__(message)
        self.blowup = blowup
        self.node = node


class RankLossAt(GeometryError):
    """Numerical integration lost full rank; carries the partial path."""

    def __init__(self, message, time, path):
        super().__init__(message)
        self.time = time
        self.path = path


class NoConvergence(GeometryError):
    """Shooting did not reach the requested tolerance; carries the best iterate."""

    def __init__(self, message, best, residual):
        super().__init__(message)
        self.best = best
        self.residual = residual
