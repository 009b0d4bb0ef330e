"""Exception types shared across the package."""


class MetricError(ValueError):
    """Base class for invalid inputs and failed computations."""


class MetricValidationError(MetricError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(str(e) for e in self.errors))


class NegativeEntry(MetricError):
    def __init__(self, i, j, value):
        self.pair = (i, j)
        super().__init__(f"NegativeEntry: d({i},{j}) = {value}")


class NonzeroDiagonal(MetricError):
    def __init__(self, i, value):
        self.index = i
        super().__init__(f"NonzeroDiagonal: d({i},{i}) = {value}")


class AsymmetricMatrix(MetricError):
    def __init__(self, i, j, dij, dji):
        self.pair = (i, j)
        super().__init__(f"AsymmetricMatrix: d({i},{j}) = {dij} but d({j},{i}) = {dji}")


class TriangleViolation(MetricError):
    def __init__(self, x, y, z):
        self.triple = (x, y, z)
        super().__init__(f"TriangleViolation({x},{y},{z}): d({x},{z}) > d({x},{y}) + d({y},{z})")


class EmptySubset(MetricError):
    pass


class EmptyPart(MetricError):
    pass


class EmptyBoundary(MetricError):
    pass


class EmptyInterior(MetricError):
    pass


class OwnerMismatch(MetricError):
    pass


class InvalidCorrespondence(MetricError):
    def __init__(self, message, uncovered=None):
        self.uncovered = uncovered
        super().__init__(message)


class SizeCapExceeded(MetricError):
    pass


class NegativeDelta(MetricError):
    pass


class NoGeodesic(MetricError):
    pass


class DisconnectedInterior(MetricError):
    pass


class InvalidCurve(MetricError):
    pass


class MeshTooCoarse(MetricError):
    pass


class MeshMisaligned(MetricError):
    pass


class SpecInvalid(MetricError):
    pass


class BudgetExceeded(MetricError):
    pass


class ParseError(MetricError):
    def __init__(self, where, message):
        self.where = where
        super().__init__(f"ParseError at {where}: {message}")
