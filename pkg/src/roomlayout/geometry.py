"""Plane/line reasoning that turns ordered walls into a partitioned layout."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (BehindCamera, DegenerateLine, EmptyRegion, GrazingRay, LineAtInfinity,
                     NearSingular, NegativeDepth, NoWalls, ParallelPlanes)
from .types import (CEILING, FLOOR, VIRTUAL, BoundingBox, CameraIntrinsics, Line2D,
                    LineDetection, Plane3D)

logger = logging.getLogger(__name__)

CONNECTED = "connected"
OCCLUDED = "occluded"

CEILING_LABEL = 0
FLOOR_LABEL = 1
WALL_LABEL0 = 2
VOID_LABEL = 255

INVALID_DEPTH = -1.0
MAX_CONDITION = 1e8


# --------------------------------------------------------------------------- point/plane math

def project_point(q, camera: CameraIntrinsics) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if not q[2] > 1e-9:
        raise BehindCamera(f"point {q.tolist()} is not in front of the camera")
    return np.array([camera.fx * q[0] / q[2] + camera.cx, camera.fy * q[1] / q[2] + camera.cy])


def plane_depth_at_pixel(plane: Plane3D, pixel, camera: CameraIntrinsics) -> float:
    """Depth at which the ray through ``pixel`` meets ``plane``."""
    ray = camera.backproject(pixel[0], pixel[1])
    denom = float(plane.normal @ ray)
    if abs(denom) <= 1e-12:
        raise GrazingRay(f"ray through {tuple(pixel)} is parallel to the plane")
    depth = -plane.offset / denom
    if depth <= 0:
        raise NegativeDepth(f"plane lies behind the camera at {tuple(pixel)}", depth)
    return depth


def inverse_depth_coefficients(plane: Plane3D, camera: CameraIntrinsics) -> np.ndarray:
    """Coefficients ``c`` with ``1/depth = c . (x, y, 1)`` for points on ``plane``."""
    return -camera.K_inv.T @ plane.param


def plane_depth_map(plane: Plane3D, camera: CameraIntrinsics, rays: Optional[np.ndarray] = None):
    """Raw per-pixel depth of ``plane`` (may be negative or inf); shape (H, W)."""
    if rays is None:
        rays = camera.pixel_rays()
    denom = rays @ plane.normal
    with np.errstate(divide="ignore", invalid="ignore"):
        return -plane.offset / denom


def plane_pair_image_line(plane_i: Plane3D, plane_k: Plane3D, camera: CameraIntrinsics) -> Line2D:
    """Image of the 3D intersection of two planes: the pixels where their depths agree."""
    if abs(plane_i.offset) < 1e-12 or abs(plane_k.offset) < 1e-12:
        raise ValueError("plane_pair_image_line needs planes off the camera centre")
    if np.linalg.norm(np.cross(plane_i.normal, plane_k.normal)) <= 1e-9:
        raise ParallelPlanes("planes are parallel; they have no intersection line")
    l = camera.K_inv.T @ (plane_i.param - plane_k.param)
    if math.hypot(l[0], l[1]) <= 1e-12 * max(1.0, abs(l[2])):
        raise LineAtInfinity("intersection line projects to the line at infinity")
    return Line2D.from_homogeneous(l, 0.0, float(camera.height))


def virtual_plane(line, camera: CameraIntrinsics) -> Plane3D:
    """Plane through the camera centre that back-projects an image line."""
    t = line.homogeneous if isinstance(line, Line2D) else np.asarray(line, dtype=float)
    v = camera.K.T @ t
    norm = float(np.linalg.norm(v))
    if not norm > 1e-12:
        raise DegenerateLine("line has no back-projection plane")
    return Plane3D(v / norm, 0.0, VIRTUAL)


def intersect_three_planes(p_i: Plane3D, p_j: Plane3D, p_k: Plane3D) -> np.ndarray:
    A = np.stack([p_i.normal, p_j.normal, p_k.normal])
    rhs = -np.array([p_i.offset, p_j.offset, p_k.offset])
    cond = float(np.linalg.cond(A))
    if not cond < MAX_CONDITION:
        raise NearSingular(f"plane triple is near singular (condition {cond:.3g})", cond)
    q = np.linalg.solve(A, rhs)
    # one refinement step tightens the residual for moderately conditioned triples
    q = q + np.linalg.solve(A, rhs - A @ q)
    return q


# --------------------------------------------------------------------------- adjacency

def order_walls(walls: Sequence) -> list[int]:
    """Indices of ``walls`` sorted left to right by box centre."""
    return sorted(range(len(walls)),
                  key=lambda i: (walls[i].box.center[0], walls[i].box.center[1], -walls[i].score))


@dataclass(frozen=True)
class Region:
    """Potential intersection line region; the x-span is half-open."""

    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def mid_y(self) -> float:
        return 0.5 * (self.y0 + self.y1)

    @property
    def mid_x(self) -> float:
        return 0.5 * (self.x0 + self.x1)

    def contains_x(self, x: float) -> bool:
        return self.x0 <= x < self.x1

    def contains(self, x: float, y: float) -> bool:
        return self.contains_x(x) and self.y0 <= y <= self.y1


def potential_region(box_i: BoundingBox, box_k: BoundingBox, dims) -> Region:
    height, width = dims
    if box_i.center[0] == box_k.center[0]:
        raise EmptyRegion("adjacent wall boxes share the same centre column")
    x0, x1 = sorted((box_i.center[0], box_k.center[0]))
    y0 = min(box_i.y0, box_k.y0)
    y1 = max(box_i.y1, box_k.y1)
    clamp = lambda v, hi: min(max(v, 0.0), float(hi))
    return Region(clamp(x0, width), clamp(x1, width), clamp(y0, height), clamp(y1, height))


def edge_band(box_i: BoundingBox, box_k: BoundingBox, tolerance: float) -> tuple[float, float]:
    """x interval where two touching boxes meet: between k's left and i's right edge, widened."""
    lo, hi = sorted((box_k.x0, box_i.x1))
    return lo - tolerance, hi + tolerance


def line_midpoint(line: Line2D) -> tuple[float, float]:
    y = line.mid_y
    return float(line.x_at(y)), y


def match_line_to_pair(region: Region, lines: Sequence[LineDetection]) -> Optional[int]:
    """Index of the strongest line whose midpoint falls in ``region``."""
    best = None
    for j, det in enumerate(lines):
        x, y = line_midpoint(det.line)
        if region.contains(x, y) and (best is None or det.score > lines[best].score):
            best = j
    return best


@dataclass(frozen=True)
class AdjacencyVerdict:
    pair: tuple[int, int]
    kind: str
    boundary: Line2D
    matched_detection: Optional[int] = None
    virtual: Optional[Plane3D] = None

    @property
    def connected(self) -> bool:
        return self.kind == CONNECTED


def fallback_boundary(region: Region) -> Line2D:
    return Line2D(0.0, region.mid_x, region.y0, region.y1)


def occluded_verdict(pair, boundary: Line2D, camera: CameraIntrinsics,
                     matched: Optional[int] = None) -> AdjacencyVerdict:
    return AdjacencyVerdict(tuple(pair), OCCLUDED, boundary, matched, virtual_plane(boundary, camera))


def classify_adjacency(plane_i: Plane3D, plane_k: Plane3D, region: Region,
                       matched_line: Optional[LineDetection], camera: CameraIntrinsics,
                       pair=(0, 1), matched_index: Optional[int] = None,
                       band: Optional[tuple[float, float]] = None) -> AdjacencyVerdict:
    """Connected when the walls' projected intersection crosses the region at mid height.

    With ``band`` the crossing must also fall inside that x interval (see
    ``edge_band``); this rejects intersections hidden behind the nearer wall.
    """
    try:
        projected = plane_pair_image_line(plane_i, plane_k, camera)
        x = float(projected.x_at(region.mid_y))
        connected = region.contains_x(x) and (band is None or band[0] <= x <= band[1])
    except (ParallelPlanes, LineAtInfinity):
        connected = False
    if connected:
        projected = replace(projected, y_min=region.y0, y_max=region.y1)
        return AdjacencyVerdict(tuple(pair), CONNECTED, projected, matched_index)
    if matched_line is not None:
        return occluded_verdict(pair, matched_line.line, camera, matched_index)
    return occluded_verdict(pair, fallback_boundary(region), camera, None)


# --------------------------------------------------------------------------- polygons

def clip_polygon(poly: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of ``poly`` to the half-plane ``h . (x, y, 1) >= 0``."""
    if len(poly) == 0:
        return poly
    f = poly @ h[:2] + h[2]
    out = []
    n = len(poly)
    for a in range(n):
        b = (a + 1) % n
        fa, fb = f[a], f[b]
        if fa >= 0:
            out.append(poly[a])
        if (fa >= 0) != (fb >= 0):
            out.append(poly[a] + (poly[b] - poly[a]) * (fa / (fa - fb)))
    return np.array(out, dtype=float).reshape(-1, 2)


def _normalised(h: np.ndarray) -> np.ndarray:
    s = math.hypot(h[0], h[1])
    return h / s if s > 0 else h


def right_of(line: Line2D) -> np.ndarray:
    return line.homogeneous.copy()


def left_of(line: Line2D) -> np.ndarray:
    return -line.homogeneous


def nearer_than(a: Plane3D, b: Plane3D, camera: CameraIntrinsics) -> np.ndarray:
    """Half-plane of pixels where ``a`` is hit no later than ``b`` (larger inverse depth)."""
    return _normalised(inverse_depth_coefficients(a, camera) - inverse_depth_coefficients(b, camera))


def image_rectangle(dims) -> np.ndarray:
    height, width = dims
    return np.array([[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]])


def polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


# --------------------------------------------------------------------------- layout

@dataclass(frozen=True)
class Corner:
    pair: int
    side: str        # "both" for connected pairs, "left"/"right" across an occlusion
    surface: str     # "floor" or "ceiling"
    xyz: np.ndarray
    xy: np.ndarray

    @property
    def key(self) -> tuple:
        return (self.pair, self.side, self.surface)


@dataclass
class Layout:
    camera: CameraIntrinsics
    walls: list                      # ordered Plane3D, label 2 + i
    floor: Optional[Plane3D]
    ceiling: Optional[Plane3D]
    verdicts: list
    corners: list
    polygons: dict                   # label -> list of (N, 2) vertex arrays
    wall_boxes: list = field(default_factory=list)
    initial_walls: list = field(default_factory=list)
    report: object = None

    @property
    def dims(self) -> tuple[int, int]:
        return self.camera.dims

    @property
    def corners_2d(self) -> np.ndarray:
        return np.array([c.xy for c in self.corners]).reshape(-1, 2)

    @property
    def corners_3d(self) -> np.ndarray:
        return np.array([c.xyz for c in self.corners]).reshape(-1, 3)

    def plane_for_label(self, label: int) -> Optional[Plane3D]:
        if label == CEILING_LABEL:
            return self.ceiling
        if label == FLOOR_LABEL:
            return self.floor
        i = label - WALL_LABEL0
        return self.walls[i] if 0 <= i < len(self.walls) else None

    def ordered_polygons(self) -> list[tuple[int, np.ndarray]]:
        """Polygons in fill priority: walls left to right, then floor, then ceiling."""
        labels = [WALL_LABEL0 + i for i in range(len(self.walls))] + [FLOOR_LABEL, CEILING_LABEL]
        return [(lab, poly) for lab in labels for poly in self.polygons.get(lab, [])]


def _layout_corners(walls, floor, ceiling, verdicts, camera) -> list[Corner]:
    corners = []
    surfaces = [(s, p) for s, p in (("floor", floor), ("ceiling", ceiling)) if p is not None]
    for pair_index, v in enumerate(verdicts):
        i, k = v.pair
        if v.connected:
            triples = [("both", walls[i], walls[k])]
        else:
            triples = [("left", walls[i], v.virtual), ("right", walls[k], v.virtual)]
        for side, a, b in triples:
            for surface, plane in surfaces:
                try:
                    q = intersect_three_planes(a, b, plane)
                    p = project_point(q, camera)
                except (NearSingular, BehindCamera) as exc:
                    logger.debug("no %s corner for pair %s (%s): %s", surface, v.pair, side, exc)
                    continue
                corners.append(Corner(pair_index, side, surface, q, p))
    return corners


def _column_polygon(verdicts, index: int, dims) -> np.ndarray:
    poly = image_rectangle(dims)
    if index > 0:
        poly = clip_polygon(poly, right_of(verdicts[index - 1].boundary))
    if index < len(verdicts):
        poly = clip_polygon(poly, left_of(verdicts[index].boundary))
    return poly


def assemble_layout(walls: Sequence[Plane3D], floor: Optional[Plane3D], ceiling: Optional[Plane3D],
                    verdicts: Sequence[AdjacencyVerdict], camera: CameraIntrinsics,
                    dims=None) -> Layout:
    """Build wall columns between pair boundaries and split each by nearest surface."""
    if not walls:
        raise NoWalls("a layout needs at least one wall")
    if len(verdicts) != len(walls) - 1:
        raise ValueError(f"{len(walls)} walls need {len(walls) - 1} verdicts, got {len(verdicts)}")
    dims = dims or camera.dims
    polygons: dict[int, list] = {}
    for i, wall in enumerate(walls):
        column = _column_polygon(verdicts, i, dims)
        surfaces = [(WALL_LABEL0 + i, wall)]
        surfaces += [(lab, p) for lab, p in ((FLOOR_LABEL, floor), (CEILING_LABEL, ceiling)) if p is not None]
        for label, plane in surfaces:
            poly = column
            for _, other in surfaces:
                if other is not plane:
                    poly = clip_polygon(poly, nearer_than(plane, other, camera))
            if polygon_area(poly) > 0:
                polygons.setdefault(label, []).append(poly)
    corners = _layout_corners(walls, floor, ceiling, verdicts, camera)
    return Layout(camera, list(walls), floor, ceiling, list(verdicts), corners, polygons)


# --------------------------------------------------------------------------- rasterisation

def polygon_mask(poly: np.ndarray, dims) -> np.ndarray:
    """Even-odd scanline fill sampled at pixel centres.

    A pixel centre ``(x, y)`` is inside when a ray towards +x crosses an odd
    number of edges; an edge counts for rows with ``min(y) <= y < max(y)``
    under the ``(y1 > y) != (y2 > y)`` rule and only crossings strictly right
    of the centre count.
    """
    height, width = dims
    mask = np.zeros((height, width), dtype=bool)
    if len(poly) < 3:
        return mask
    x1, y1 = poly[:, 0], poly[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    py = np.arange(height) + 0.5
    spans = (y1[:, None] > py[None, :]) != (y2[:, None] > py[None, :])
    e, r = np.nonzero(spans)
    if len(e) == 0:
        return mask
    xint = x1[e] + (py[r] - y1[e]) * (x2[e] - x1[e]) / (y2[e] - y1[e])
    # pixel j is left of the crossing iff j + 0.5 < xint iff j < ceil(xint - 0.5)
    cut = np.clip(np.ceil(xint - 0.5), 0, width).astype(int)
    hist = np.zeros((height, width + 1), dtype=np.int32)
    np.add.at(hist, (r, cut), 1)
    right_counts = np.cumsum(hist[:, ::-1], axis=1)[:, ::-1][:, 1:]
    return (right_counts & 1).astype(bool)


def rasterize_segmentation(layout: Layout, dims=None) -> np.ndarray:
    """Label map (uint8): 0 ceiling, 1 floor, 2+i wall i; earlier polygons win ties."""
    dims = dims or layout.dims
    labels = np.full(dims, VOID_LABEL, dtype=np.uint8)
    free = np.ones(dims, dtype=bool)
    for label, poly in layout.ordered_polygons():
        claim = polygon_mask(poly, dims) & free
        labels[claim] = label
        free &= ~claim
    if free.any():
        # numerical slivers between polygons sharing an edge
        logger.debug("filling %d unclaimed pixels from row neighbours", int(free.sum()))
        labels = _fill_from_neighbours(labels, free)
    return labels


def _fill_from_neighbours(labels: np.ndarray, free: np.ndarray) -> np.ndarray:
    h, w = labels.shape
    cols = np.where(~free, np.arange(w)[None, :], -1)
    left = np.maximum.accumulate(cols, axis=1)
    cols_r = np.where(~free, np.arange(w)[None, :], w)
    right = np.minimum.accumulate(cols_r[:, ::-1], axis=1)[:, ::-1]
    src = np.where(left >= 0, left, right)
    rows = np.repeat(np.arange(h)[:, None], w, axis=1)
    ok = (src >= 0) & (src < w)
    out = labels.copy()
    out[free & ok] = labels[rows[free & ok], src[free & ok]]
    return out


def render_depth(layout: Layout, labels: np.ndarray, dims=None) -> np.ndarray:
    """Per-pixel depth of each pixel's labelled plane; non-positive or grazing -> -1."""
    dims = dims or layout.dims
    camera = layout.camera
    rays = camera.pixel_rays()
    depth = np.full(dims, INVALID_DEPTH)
    for label in np.unique(labels):
        plane = layout.plane_for_label(int(label))
        if plane is None:
            continue
        sel = labels == label
        denom = rays[sel] @ plane.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            d = -plane.offset / denom
        d[~(np.abs(denom) > 1e-12) | ~(d > 0)] = INVALID_DEPTH
        depth[sel] = d
    return depth
