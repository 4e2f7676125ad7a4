"""Exception types raised across the package."""


class LayoutError(Exception):
    """Base class for all errors raised by roomlayout."""


class DegenerateParameter(LayoutError):
    pass


class CenterOutOfBounds(LayoutError):
    pass


class EmptyExtent(LayoutError):
    pass


class ParallelPlanes(LayoutError):
    pass


class LineAtInfinity(LayoutError):
    pass


class EmptyRegion(LayoutError):
    pass


class DegenerateLine(LayoutError):
    pass


class NearSingular(LayoutError):
    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


class BehindCamera(LayoutError):
    pass


class GrazingRay(LayoutError):
    pass


class NegativeDepth(LayoutError):
    def __init__(self, message: str, depth: float):
        super().__init__(message)
        self.depth = depth


class NoWalls(LayoutError):
    pass


class OffsetNearZero(LayoutError):
    pass


class DimensionMismatch(LayoutError):
    pass


class EmptyBoundary(LayoutError):
    pass


class NoValidPixels(LayoutError):
    pass


class SamplingExhausted(LayoutError):
    pass


class DegenerateView(LayoutError):
    pass


class FormatError(LayoutError):
    """Malformed scene, raster or label file."""
