"""Procedural rooms with exact ground truth, plus a detection noise model.

Rooms live in a gravity-aligned world frame (y up, floor at y = 0, ceiling
at y = height). The floor polygon is given in the x-z plane. Everything is
rotated into the camera frame (x right, y down, z forward) on output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DegenerateView, SamplingExhausted
from .decode import lines_intersect_in_image
from .errors import EmptyRegion
from .geometry import (CONNECTED, FLOOR_LABEL, CEILING_LABEL, INVALID_DEPTH, OCCLUDED, VOID_LABEL,
                       WALL_LABEL0, line_midpoint, order_walls, potential_region)
from .types import (CEILING, FLOOR, WALL, BoundingBox, CameraIntrinsics, GroundTruthRefs, Line2D,
                    LineDetection, Plane3D, PlaneDetection, Scene)

SHAPES = ("rect", "convex", "lshape", "mixed")
_MIXED_WEIGHTS = {"rect": 0.3, "convex": 0.4, "lshape": 0.3}


@dataclass(frozen=True)
class RoomConfig:
    shape: str = "mixed"
    resolutions: tuple = ((640, 384), (640, 480))
    vertex_range: tuple = (4, 10)
    extent_range: tuple = (3.0, 8.0)          # metres, room footprint side length
    wall_height_range: tuple = (2.5, 3.2)
    camera_height_range: tuple = (1.2, 1.8)
    max_pitch: float = 0.35
    hfov_range: tuple = (math.radians(60.0), math.radians(80.0))
    wall_margin: float = 0.4                  # camera distance to every wall, metres
    min_edge: float = 1.0
    min_turn: float = math.radians(15.0)
    min_wall_width_px: float = 16.0
    min_wall_pixels: int = 400
    min_line_gap_px: float = 16.0             # between boundary lines on shared rows
    require_occlusion: bool = False
    max_rejections: int = 1000

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}")
        lo, hi = self.vertex_range
        if not 4 <= lo <= hi <= 10:
            raise ValueError("vertex_range must satisfy 4 <= lo <= hi <= 10")
        if not 0 <= self.max_pitch <= 0.35:
            raise ValueError("max_pitch must lie in [0, 0.35]")
        h_lo, h_hi = self.camera_height_range
        if not (1.2 <= h_lo <= h_hi <= 1.8):
            raise ValueError("camera heights must lie in [1.2, 1.8]")
        if self.wall_height_range[0] <= h_hi:
            raise ValueError("walls must be taller than the highest camera")
        for w, h in self.resolutions:
            if w <= 0 or h <= 0:
                raise ValueError("resolutions must be positive")
        if self.max_rejections < 1:
            raise ValueError("max_rejections must be positive")


@dataclass(frozen=True)
class RoomSpec:
    polygon: np.ndarray         # (N, 2) x-z vertices, counter-clockwise
    wall_height: float
    position: np.ndarray        # world (x, y, z); y is the camera height
    yaw: float
    pitch: float
    camera: CameraIntrinsics
    shape: str = "convex"

    def __post_init__(self):
        poly = np.array(self.polygon, dtype=float).reshape(-1, 2)
        pos = np.array(self.position, dtype=float).reshape(3)
        poly.setflags(write=False)
        pos.setflags(write=False)
        object.__setattr__(self, "polygon", poly)
        object.__setattr__(self, "position", pos)
        if not 4 <= len(poly) <= 10:
            raise ValueError("floor polygon needs 4 to 10 vertices")
        if not is_simple(poly):
            raise ValueError("floor polygon self-intersects")
        if not abs(self.pitch) <= 0.35:
            raise ValueError("pitch must lie in [-0.35, 0.35]")
        if not 0 < pos[1] < self.wall_height:
            raise ValueError("camera must be between floor and ceiling")
        if not point_in_polygon(pos[[0, 2]], poly):
            raise ValueError("camera must be strictly inside the floor polygon")

    @property
    def rotation(self) -> np.ndarray:
        """World-to-camera rotation; rows are the camera right, down and forward axes."""
        return camera_rotation(self.yaw, self.pitch)

    def to_camera(self, q) -> np.ndarray:
        return (np.asarray(q, dtype=float) - self.position) @ self.rotation.T


@dataclass(frozen=True)
class NoiseSpec:
    normal_sigma: float = 0.0
    offset_sigma: float = 0.0
    line_theta_sigma: float = 0.0
    line_b_sigma: float = 0.0
    drop_prob: float = 0.0          # lines
    plane_drop_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("normal_sigma", "offset_sigma", "line_theta_sigma", "line_b_sigma"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("drop_prob", "plane_drop_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class GroundTruthCorner:
    key: tuple                  # (pair, side, surface), same as reconstructed corners
    xyz: np.ndarray
    xy: np.ndarray


@dataclass
class GroundTruth:
    spec: RoomSpec
    scene: Scene
    labels: np.ndarray
    depth: np.ndarray
    corners: list
    kinds: list                 # per adjacent pair: CONNECTED or OCCLUDED
    wall_edges: list            # polygon edge index of each ordered wall
    occluders: list = field(default_factory=list)   # (pair, V, P) world points per occlusion


# --------------------------------------------------------------------------- plan-view helpers

def _cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def signed_area(poly: np.ndarray) -> float:
    x, z = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(z, -1)) - np.dot(z, np.roll(x, -1)))


def _segments_cross(p1, p2, q1, q2) -> bool:
    d1 = _cross2(q2 - q1, p1 - q1)
    d2 = _cross2(q2 - q1, p2 - q1)
    d3 = _cross2(p2 - p1, q1 - p1)
    d4 = _cross2(p2 - p1, q2 - p1)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def is_simple(poly: np.ndarray) -> bool:
    """True when no two non-adjacent edges cross and no edge is degenerate."""
    n = len(poly)
    if n < 3:
        return False
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    if any(np.linalg.norm(b - a) < 1e-9 for a, b in edges):
        return False
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(*edges[i], *edges[j]):
                return False
    return abs(signed_area(poly)) > 1e-9


def point_in_polygon(p, poly: np.ndarray) -> bool:
    x, z = float(p[0]), float(p[1])
    inside = False
    n = len(poly)
    for i in range(n):
        x1, z1 = poly[i]
        x2, z2 = poly[(i + 1) % n]
        if (z1 > z) != (z2 > z):
            if x < x1 + (z - z1) * (x2 - x1) / (z2 - z1):
                inside = not inside
    return inside


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    s = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + s * ab)))


def camera_rotation(yaw: float, pitch: float) -> np.ndarray:
    f = np.array([math.sin(yaw) * math.cos(pitch), math.sin(pitch), math.cos(yaw) * math.cos(pitch)])
    r = np.cross(f, [0.0, 1.0, 0.0])
    r /= np.linalg.norm(r)
    d = np.cross(f, r)
    return np.stack([r, d, f])


# --------------------------------------------------------------------------- sampling

def _rect(rng, cfg):
    w, d = rng.uniform(*cfg.extent_range, size=2)
    return np.array([[0, 0], [w, 0], [w, d], [0, d]], dtype=float) - [w / 2, d / 2]


def _convex(rng, cfg):
    lo, hi = cfg.vertex_range
    for _ in range(100):
        n = int(rng.integers(lo, hi + 1))
        a, b = rng.uniform(*cfg.extent_range, size=2) / 2
        angles = np.sort(rng.uniform(0, 2 * math.pi, size=n))
        poly = np.stack([a * np.cos(angles), b * np.sin(angles)], axis=1)
        if _well_shaped(poly, cfg):
            return poly
    return None


def _lshape(rng, cfg):
    w, d = rng.uniform(*cfg.extent_range, size=2)
    cw, cd = rng.uniform(0.35, 0.65, size=2) * [w, d]
    poly = np.array([[0, 0], [w, 0], [w, d - cd], [w - cw, d - cd], [w - cw, d], [0, d]], dtype=float)
    return poly - [w / 2, d / 2]


def _well_shaped(poly, cfg) -> bool:
    n = len(poly)
    for i in range(n):
        e1 = poly[(i + 1) % n] - poly[i]
        e2 = poly[(i + 2) % n] - poly[(i + 1) % n]
        if np.linalg.norm(e1) < cfg.min_edge:
            return False
        cosang = np.dot(e1, e2) / (np.linalg.norm(e1) * np.linalg.norm(e2))
        if math.acos(np.clip(cosang, -1, 1)) < cfg.min_turn:
            return False
    return is_simple(poly)


def _sample_polygon(rng, cfg):
    shape = cfg.shape
    if shape == "mixed":
        names = list(_MIXED_WEIGHTS)
        shape = names[int(rng.choice(len(names), p=list(_MIXED_WEIGHTS.values())))]
    poly = {"rect": _rect, "convex": _convex, "lshape": _lshape}[shape](rng, cfg)
    if poly is not None and signed_area(poly) < 0:
        poly = poly[::-1].copy()
    return shape, poly


def _reflex_vertices(poly):
    n = len(poly)
    out = []
    for i in range(n):
        e1 = poly[i] - poly[i - 1]
        e2 = poly[(i + 1) % n] - poly[i]
        if _cross2(e1, e2) < 0:
            out.append(i)
    return out


def _sample_camera(rng, cfg, poly, shape):
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    for _ in range(200):
        p = rng.uniform(lo, hi)
        if not point_in_polygon(p, poly):
            continue
        n = len(poly)
        if min(_point_segment_distance(p, poly[i], poly[(i + 1) % n]) for i in range(n)) < cfg.wall_margin:
            continue
        break
    else:
        return None
    yaw = rng.uniform(0, 2 * math.pi)
    reflex = _reflex_vertices(poly)
    if cfg.require_occlusion and reflex:
        v = poly[reflex[int(rng.integers(len(reflex)))]]
        # world x points left of the view at yaw 0, so yaw = atan2(dx, dz)
        yaw = math.atan2(v[0] - p[0], v[1] - p[1]) + rng.uniform(-0.4, 0.4)
    pitch = rng.uniform(-cfg.max_pitch, cfg.max_pitch)
    height = rng.uniform(*cfg.camera_height_range)
    return np.array([p[0], height, p[1]]), yaw, pitch


def _sample_intrinsics(rng, cfg):
    width, height = cfg.resolutions[int(rng.integers(len(cfg.resolutions)))]
    hfov = rng.uniform(*cfg.hfov_range)
    f = 0.5 * width / math.tan(0.5 * hfov)
    return CameraIntrinsics(f, f, 0.5 * width, 0.5 * height, int(width), int(height))


def sample_room(seed: int, config: RoomConfig = RoomConfig()) -> RoomSpec:
    """Rejection-sample a room and camera whose view passes every ground-truth check.

    Deterministic in ``seed``. A candidate is rejected unless the camera sees
    at least two walls and the floor with well separated, non-degenerate walls
    (and an occlusion, when ``config.require_occlusion``).
    """
    return _sample(seed, config).spec


def _sample(seed: int, config: RoomConfig) -> "GroundTruth":
    rng = np.random.default_rng(seed)
    for _ in range(config.max_rejections):
        shape, poly = _sample_polygon(rng, config)
        if poly is None or not _well_shaped_any(poly, shape, config):
            continue
        wall_height = rng.uniform(*config.wall_height_range)
        cam = _sample_camera(rng, config, poly, shape)
        if cam is None:
            continue
        position, yaw, pitch = cam
        spec = RoomSpec(poly, wall_height, position, yaw, pitch, _sample_intrinsics(rng, config), shape)
        if not _coarse_view_ok(spec, config):
            continue
        try:
            gt = ground_truth_scene(spec, config)
        except DegenerateView:
            continue
        if config.require_occlusion and OCCLUDED not in gt.kinds:
            continue
        return gt
    raise SamplingExhausted(f"no acceptable room after {config.max_rejections} candidates (seed {seed})")


def _coarse_view_ok(spec: RoomSpec, config: RoomConfig, factor: int = 4) -> bool:
    """Cheap pre-filter at reduced resolution: floor and two sizeable walls in view."""
    cam = spec.camera
    small = CameraIntrinsics(cam.fx / factor, cam.fy / factor, cam.cx / factor, cam.cy / factor,
                             max(cam.width // factor, 1), max(cam.height // factor, 1))
    ident, _ = _ray_cast(replace(spec, camera=small))
    if not np.any(ident == -2):
        return False
    counts = np.bincount(ident[ident >= 0])
    min_count = 0.5 * config.min_wall_pixels / factor ** 2
    return int(np.sum(counts >= min_count)) >= 2


def _well_shaped_any(poly, shape, cfg) -> bool:
    if shape == "convex":
        return True                     # checked while sampling
    n = len(poly)
    return is_simple(poly) and all(np.linalg.norm(poly[(i + 1) % n] - poly[i]) >= cfg.min_edge
                                   for i in range(n))


# --------------------------------------------------------------------------- ground truth

def _wall_planes_world(spec: RoomSpec):
    """Inward unit normals and offsets (world frame) of each polygon edge."""
    poly = spec.polygon
    out = []
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        e = (b - a) / np.linalg.norm(b - a)
        n = np.array([-e[1], 0.0, e[0]])          # left of the edge is inside (CCW)
        out.append((n, -float(n[[0, 2]] @ a)))
    return out


def _to_camera_plane(spec: RoomSpec, n_world, d_world, category) -> Plane3D:
    n_cam = spec.rotation @ n_world
    d_cam = d_world + float(n_world @ spec.position)
    return Plane3D(n_cam, d_cam, category).canonical()


def _ray_cast(spec: RoomSpec):
    """Per-pixel surface id and depth: -1 ceiling, -2 floor, otherwise wall edge index."""
    cam = spec.camera
    rays = cam.pixel_rays()
    dirs = rays @ spec.rotation               # world directions with unit camera depth
    c = spec.position
    h, w = cam.height, cam.width
    best = np.full((h, w), np.inf)
    ident = np.full((h, w), -3, dtype=np.int64)

    dy = dirs[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_floor = np.where(dy < 0, -c[1] / dy, np.inf)
        t_ceil = np.where(dy > 0, (spec.wall_height - c[1]) / dy, np.inf)
    for t, tag in ((t_floor, -2), (t_ceil, -1)):
        hit = t < best
        best[hit] = t[hit]
        ident[hit] = tag

    dp = dirs[..., [0, 2]]
    cp = c[[0, 2]]
    poly = spec.polygon
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        e = b - a
        denom = _cross2(dp, e)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = _cross2(a - cp, e) / denom
            s = _cross2(a - cp, dp) / denom
        ok = (np.abs(denom) > 1e-15) & (t > 1e-9) & (s >= 0) & (s <= 1)
        hit = ok & (t < best)
        best[hit] = t[hit]
        ident[hit] = i
    return ident, best


def _tight_box(mask: np.ndarray) -> BoundingBox:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    x0, x1 = cols[0], cols[-1] + 1
    y0, y1 = rows[0], rows[-1] + 1
    return BoundingBox((0.5 * (x0 + x1), 0.5 * (y0 + y1)), (x1 - x0, y1 - y0))


def _vertical_line(spec: RoomSpec, v) -> Line2D:
    """Image of the vertical wall edge standing on plan point ``v``."""
    q1 = spec.to_camera([v[0], 0.0, v[1]])
    q2 = spec.to_camera([v[0], spec.wall_height, v[1]])
    l = spec.camera.K_inv.T @ np.cross(q1, q2)
    y_lo, y_hi = _visible_rows(spec.camera, q1, q2)
    return Line2D.from_homogeneous(l, y_lo, y_hi)


def _visible_rows(camera: CameraIntrinsics, q1, q2) -> tuple[float, float]:
    eps = 1e-6
    if q1[2] < eps and q2[2] < eps:
        return 0.0, float(camera.height)
    if q1[2] < eps or q2[2] < eps:
        s = (eps - q1[2]) / (q2[2] - q1[2])
        clipped = q1 + s * (q2 - q1)
        q1, q2 = (clipped, q2) if q1[2] < eps else (q1, clipped)
    ys = [camera.fy * q[1] / q[2] + camera.cy for q in (q1, q2)]
    lo = min(max(min(ys), 0.0), float(camera.height))
    hi = min(max(max(ys), 0.0), float(camera.height))
    return lo, hi


def _occluder(spec: RoomSpec, edge_a: int, edge_b: int):
    """Occluding vertex V on one wall and the far point P it hides on the other."""
    poly = spec.polygon
    n = len(poly)
    cp = spec.position[[0, 2]]
    best = None
    for near, far in ((edge_a, edge_b), (edge_b, edge_a)):
        fa, fb = poly[far], poly[(far + 1) % n]
        for v in (poly[near], poly[(near + 1) % n]):
            d = v - cp
            e = fb - fa
            denom = _cross2(d, e)
            if abs(denom) < 1e-12:
                continue
            t = _cross2(fa - cp, e) / denom
            s = _cross2(fa - cp, d) / denom
            if t > 1.0 + 1e-9 and -1e-9 <= s <= 1 + 1e-9 and _unobstructed(spec, cp, v):
                if best is None or t < best[2]:
                    best = (v, cp + t * d, t)
    if best is None:
        raise DegenerateView(f"no occluding vertex between walls {edge_a} and {edge_b}")
    return best[0], best[1]


def _unobstructed(spec: RoomSpec, cp, v) -> bool:
    poly = spec.polygon
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        if np.allclose(a, v) or np.allclose(b, v):
            continue
        if _segments_cross(cp, v, a, b):
            return False
    return True


def _corner(spec: RoomSpec, key, point, surface):
    y = 0.0 if surface == "floor" else spec.wall_height
    q = spec.to_camera([point[0], y, point[1]])
    if not q[2] > 1e-9:
        return None
    cam = spec.camera
    xy = np.array([cam.fx * q[0] / q[2] + cam.cx, cam.fy * q[1] / q[2] + cam.cy])
    return GroundTruthCorner(key, q, xy)


def ground_truth_scene(spec: RoomSpec, config: RoomConfig = RoomConfig()) -> GroundTruth:
    """Exact planes, lines, label map, depth map and corners for ``spec``."""
    cam = spec.camera
    ident, t = _ray_cast(spec)
    if np.any(ident == -3) or not np.all(np.isfinite(t)):
        raise DegenerateView("some pixels hit no surface")
    if not np.any(ident == -2):
        raise DegenerateView("floor is not visible")

    visible = [e for e in np.unique(ident) if e >= 0]
    if len(visible) < 2:
        raise DegenerateView("fewer than two walls visible")
    world = _wall_planes_world(spec)
    boxes, planes = {}, {}
    for e in visible:
        mask = ident == e
        box = _tight_box(mask)
        if box.size[0] < config.min_wall_width_px or mask.sum() < config.min_wall_pixels:
            raise DegenerateView(f"wall {e} is too small in the image")
        plane = _to_camera_plane(spec, *world[e], WALL)
        if plane.offset < 0.05:
            raise DegenerateView(f"camera is nearly in the plane of wall {e}")
        boxes[e], planes[e] = box, plane
    dets = [PlaneDetection(boxes[e], planes[e], 1.0) for e in visible]
    order = [visible[i] for i in order_walls(dets)]
    rank = {e: r for r, e in enumerate(order)}

    labels = np.full(ident.shape, VOID_LABEL, dtype=np.uint8)
    labels[ident == -1] = CEILING_LABEL
    labels[ident == -2] = FLOOR_LABEL
    for e in visible:
        labels[ident == e] = WALL_LABEL0 + rank[e]
    _check_columns(labels)

    n = len(spec.polygon)
    kinds, lines, corners, occluders = [], [], [], []
    surfaces = ["floor"] + (["ceiling"] if np.any(ident == -1) else [])
    for pair, (ea, eb) in enumerate(zip(order[:-1], order[1:])):
        if (ea + 1) % n == eb or (eb + 1) % n == ea:
            v = spec.polygon[eb] if (ea + 1) % n == eb else spec.polygon[ea]
            kinds.append(CONNECTED)
            lines.append(_vertical_line(spec, v))
            points = [("both", v)]
        else:
            v, p = _occluder(spec, ea, eb)
            kinds.append(OCCLUDED)
            lines.append(_vertical_line(spec, v))
            occluders.append((pair, v, p))
            a_is_near = any(np.allclose(v, spec.polygon[i]) for i in (ea, (ea + 1) % n))
            points = [("left", v if a_is_near else p), ("right", p if a_is_near else v)]
        _check_region(boxes[ea], boxes[eb], lines[-1], cam.dims)
        for side, point in points:
            for surface in surfaces:
                c = _corner(spec, (pair, side, surface), point, surface)
                if c is not None:
                    corners.append(c)

    _check_line_separation(lines, cam.dims, config.min_line_gap_px)
    floor = _to_camera_plane(spec, np.array([0.0, 1.0, 0.0]), 0.0, FLOOR)
    ceiling = _to_camera_plane(spec, np.array([0.0, -1.0, 0.0]), spec.wall_height, CEILING)
    plane_dets = [PlaneDetection(boxes[e], planes[e], 1.0) for e in order]
    for tag, plane in ((-2, floor), (-1, ceiling)):
        mask = ident == tag
        if mask.any():
            plane_dets.append(PlaneDetection(_tight_box(mask), plane, 1.0))
    line_dets = [LineDetection(l, 1.0) for l in lines]
    refs = GroundTruthRefs(corners=[c.xy.tolist() for c in corners])
    scene = Scene(cam, plane_dets, line_dets, refs)
    depth = np.where(labels == VOID_LABEL, INVALID_DEPTH, t)
    return GroundTruth(spec, scene, labels, depth, corners, kinds, order, occluders)


def _check_region(box_a, box_b, line: Line2D, dims) -> None:
    """The pair's boundary must cross its potential region, as the reasoning assumes."""
    try:
        region = potential_region(box_a, box_b, dims)
    except EmptyRegion as exc:
        raise DegenerateView(str(exc)) from exc
    x_mid, y_mid = line_midpoint(line)
    if not (region.contains_x(float(line.x_at(region.mid_y))) and region.contains(x_mid, y_mid)):
        raise DegenerateView("wall boundary falls outside the region between the wall centres")


def _check_line_separation(lines, dims, min_gap: float) -> None:
    """Boundary lines must not cross in the image nor run closer than ``min_gap`` pixels."""
    for i, a in enumerate(lines):
        for b in lines[i + 1:]:
            if lines_intersect_in_image(a, b, dims):
                raise DegenerateView("two wall boundaries cross inside the image")
            y0, y1 = max(a.y_min, b.y_min), min(a.y_max, b.y_max)
            if y0 <= y1:
                ys = np.array([y0, y1])
                gaps = a.x_at(ys) - b.x_at(ys)
                if np.min(np.abs(gaps)) < min_gap:
                    raise DegenerateView("two wall boundaries are too close together")


def _check_columns(labels: np.ndarray) -> None:
    """Walls must appear in label order along every row (no interleaving)."""
    walls = np.where(labels >= WALL_LABEL0, labels.astype(int), -1)
    for row in walls:
        vals = row[row >= 0]
        if len(vals) > 1 and np.any(np.diff(vals) < 0):
            raise DegenerateView("wall order is not consistent across rows")
    for lab in np.unique(walls[walls >= 0]):
        cols = np.flatnonzero((walls == lab).any(axis=0))
        if cols[-1] - cols[0] + 1 != len(cols):
            raise DegenerateView(f"wall label {lab} is split into separate columns")


def generate(seed: int, config: RoomConfig = RoomConfig()) -> GroundTruth:
    """``ground_truth_scene(sample_room(seed, config))`` without rendering twice."""
    return _sample(seed, config)


# --------------------------------------------------------------------------- noise

def _tilt(rng, normal: np.ndarray, sigma: float) -> np.ndarray:
    """Tilt ``normal`` by a half-normal angle towards a uniformly random tangent direction."""
    u = rng.normal(size=3)
    u -= (u @ normal) * normal
    u /= np.linalg.norm(u)
    angle = abs(rng.normal(0.0, sigma)) if sigma > 0 else 0.0
    if angle == 0.0:
        return normal
    return math.cos(angle) * normal + math.sin(angle) * u


def perturb_scene(scene: Scene, noise: NoiseSpec, seed: Optional[int] = None) -> Scene:
    """Noisy copy of ``scene``; ``seed`` overrides ``noise.seed``. GT references are kept."""
    rng = np.random.default_rng(noise.seed if seed is None else seed)
    planes = []
    for det in scene.planes:
        n = _tilt(rng, det.plane.normal, noise.normal_sigma)
        scale = 1.0 + rng.normal(0.0, noise.offset_sigma) if noise.offset_sigma > 0 else 1.0
        drop = rng.random() < noise.plane_drop_prob
        if drop:
            continue
        n = n / np.linalg.norm(n)
        plane = Plane3D(n, det.plane.offset * scale, det.plane.category)
        planes.append(replace(det, plane=plane))
    lines = []
    for det in scene.lines:
        dtheta = rng.normal(0.0, noise.line_theta_sigma) if noise.line_theta_sigma > 0 else 0.0
        db = rng.normal(0.0, noise.line_b_sigma) if noise.line_b_sigma > 0 else 0.0
        if rng.random() < noise.drop_prob:
            continue
        line = det.line
        if dtheta or db:
            line = Line2D(line.theta + dtheta, line.b + db, line.y_min, line.y_max)
        lines.append(replace(det, line=line))
    return Scene(scene.camera, planes, lines, scene.gt)
