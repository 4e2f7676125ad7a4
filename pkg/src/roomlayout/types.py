"""Geometric value types shared by every stage of the layout pipeline.

Conventions: camera frame with +z forward, +x right, +y down. Image x grows
to the right and y downwards; pixel ``(j, i)`` covers ``[j, j+1) x [i, i+1)``.
Depth is the z component of a camera-frame point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateParameter

WALL = "wall"
FLOOR = "floor"
CEILING = "ceiling"
VIRTUAL = "virtual"
CATEGORIES = (WALL, FLOOR, CEILING, VIRTUAL)

# Channel order of the plane likelihood raster.
PLANE_CHANNELS = (WALL, FLOOR, CEILING)

TWO_PI = 2.0 * math.pi


def _frozen(values, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @property
    def K_inv(self) -> np.ndarray:
        # closed form keeps backprojection exact to rounding
        return np.array([[1.0 / self.fx, 0.0, -self.cx / self.fx],
                         [0.0, 1.0 / self.fy, -self.cy / self.fy],
                         [0.0, 0.0, 1.0]])

    @property
    def dims(self) -> tuple[int, int]:
        """(height, width) of the image."""
        return (self.height, self.width)

    def backproject(self, x, y) -> np.ndarray:
        """Ray directions ``K^-1 (x, y, 1)`` with unit z; broadcasts over arrays."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.stack([(x - self.cx) / self.fx, (y - self.cy) / self.fy, np.ones_like(x)], axis=-1)

    def pixel_rays(self) -> np.ndarray:
        """Rays through every pixel centre, shape (H, W, 3)."""
        xs = np.arange(self.width) + 0.5
        ys = np.arange(self.height) + 0.5
        return self.backproject(*np.meshgrid(xs, ys))

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_fov(cls, width: int, height: int, hfov: float) -> "CameraIntrinsics":
        f = 0.5 * width / math.tan(0.5 * hfov)
        return cls(f, f, width / 2.0, height / 2.0, width, height)


def backproject_ray(pixel: Sequence[float], camera: CameraIntrinsics) -> np.ndarray:
    """Ray through ``pixel`` with z component 1."""
    return camera.backproject(pixel[0], pixel[1])


@dataclass(frozen=True, eq=False)
class Plane3D:
    """Plane ``n . q + d = 0`` in the camera frame."""

    normal: np.ndarray
    offset: float
    category: str = WALL
    # the n/d triple this plane was parsed from, echoed back by ``param``
    source: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.source is not None:
            object.__setattr__(self, "source", _frozen(self.source, (3,)))
        n = _frozen(self.normal, (3,))
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError(f"plane normal must be unit length, got |n|={np.linalg.norm(n)!r}")
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown plane category {self.category!r}")
        if self.category == VIRTUAL and self.offset != 0.0:
            raise ValueError("virtual planes pass through the camera centre (d = 0)")

    @property
    def param(self) -> np.ndarray:
        """The 3-vector ``n / d`` used by the parameter raster and the scene file."""
        if self.source is not None:
            return self.source.copy()
        return self.normal / self.offset

    def canonical(self) -> "Plane3D":
        """Same plane with the sign chosen so that ``d > 0``."""
        if self.offset < 0:
            return Plane3D(-self.normal, -self.offset, self.category, self.source)
        return self

    def with_category(self, category: str) -> "Plane3D":
        return Plane3D(self.normal, self.offset, category, self.source)

    def distance(self, q) -> np.ndarray:
        return np.asarray(q, dtype=float) @ self.normal + self.offset

    def __repr__(self):
        n = ", ".join(f"{v:.6g}" for v in self.normal)
        return f"Plane3D(normal=({n}), offset={self.offset:.6g}, category={self.category!r})"


def normalize_plane(raw, category: str = WALL) -> Plane3D:
    """Convert a raw ``n / d`` parameter triple into a unit-normal plane with ``d > 0``."""
    m = np.asarray(raw, dtype=float).reshape(3)
    norm = float(np.linalg.norm(m))
    if not norm > 1e-12:
        raise DegenerateParameter(f"plane parameter {m.tolist()} has no finite plane")
    return Plane3D(m / norm, 1.0 / norm, category, m)


@dataclass(frozen=True)
class Line2D:
    """Image line ``x cos(theta) + y sin(theta) - b = 0`` with a vertical extent."""

    theta: float
    b: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if self.y_min > self.y_max:
            raise ValueError(f"empty line extent [{self.y_min}, {self.y_max}]")
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)
        object.__setattr__(self, "b", float(self.b))

    @property
    def homogeneous(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta), -self.b])

    def x_at(self, y):
        """x coordinate of the line at row ``y`` (infinite for horizontal lines)."""
        c = math.cos(self.theta)
        s = math.sin(self.theta)
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            return (self.b - y * s) / c

    @property
    def mid_y(self) -> float:
        return 0.5 * (self.y_min + self.y_max)

    @classmethod
    def from_homogeneous(cls, l, y_min: float = 0.0, y_max: float = 0.0) -> "Line2D":
        """Normal form of the homogeneous line ``l`` with ``cos(theta) >= 0``."""
        l = np.asarray(l, dtype=float)
        scale = math.hypot(l[0], l[1])
        if scale == 0.0:
            raise ValueError("line at infinity has no normal form")
        if l[0] < 0 or (l[0] == 0 and l[1] < 0):
            scale = -scale
        c, s = l[0] / scale, l[1] / scale
        return cls(math.atan2(s, c), -l[2] / scale, y_min, y_max)

    def to_dict(self) -> dict:
        return {"theta": self.theta, "b": self.b, "y_min": self.y_min, "y_max": self.y_max}


def angle_difference(a: float, b: float) -> float:
    """Smallest absolute difference between two angles, in radians."""
    d = (a - b) % TWO_PI
    return min(d, TWO_PI - d)


@dataclass(frozen=True)
class BoundingBox:
    center: tuple[float, float]
    size: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "size", (float(self.size[0]), float(self.size[1])))
        if not (self.size[0] > 0 and self.size[1] > 0):
            raise ValueError(f"box size must be positive, got {self.size}")

    @property
    def x0(self) -> float:
        return self.center[0] - 0.5 * self.size[0]

    @property
    def x1(self) -> float:
        return self.center[0] + 0.5 * self.size[0]

    @property
    def y0(self) -> float:
        return self.center[1] - 0.5 * self.size[1]

    @property
    def y1(self) -> float:
        return self.center[1] + 0.5 * self.size[1]

    def iou(self, other: "BoundingBox") -> float:
        iw = min(self.x1, other.x1) - max(self.x0, other.x0)
        ih = min(self.y1, other.y1) - max(self.y0, other.y0)
        if iw <= 0 or ih <= 0:
            return 0.0
        inter = iw * ih
        union = self.size[0] * self.size[1] + other.size[0] * other.size[1] - inter
        return inter / union

    def intersects_image(self, width: int, height: int) -> bool:
        return self.x1 > 0 and self.x0 < width and self.y1 > 0 and self.y0 < height


@dataclass(frozen=True)
class PlaneDetection:
    box: BoundingBox
    plane: Plane3D
    score: float = 1.0

    @property
    def category(self) -> str:
        return self.plane.category


@dataclass(frozen=True)
class LineDetection:
    line: Line2D
    score: float = 1.0


@dataclass(frozen=True)
class GroundTruthRefs:
    labels: Optional[str] = None
    depth: Optional[str] = None
    corners: Optional[list] = None


@dataclass(frozen=True)
class Scene:
    camera: CameraIntrinsics
    planes: list = field(default_factory=list)
    lines: list = field(default_factory=list)
    gt: Optional[GroundTruthRefs] = None

    def planes_of(self, category: str) -> list:
        return [p for p in self.planes if p.category == category]

    @property
    def walls(self) -> list:
        return self.planes_of(WALL)
