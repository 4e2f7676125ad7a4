"""Quarter-resolution detection rasters: target encoding, peak decoding, NMS.

Plane and line likelihood maps are decoded CenterNet style: every 3x3 local
maximum above a threshold is a candidate, and the regression rasters are read
at the peak cell. Offsets and sizes are stored in map units; rescaling to
input pixels by the stride happens only at decode time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CenterOutOfBounds, DegenerateParameter, EmptyExtent
from .types import (PLANE_CHANNELS, BoundingBox, CameraIntrinsics, Line2D, LineDetection,
                    PlaneDetection, Scene, normalize_plane)

logger = logging.getLogger(__name__)

STRIDE = 4
LINE_SIGMA = 5.0 / 6.0
MIN_OVERLAP = 0.7

RASTER_NAMES = (
    "plane_likelihood.wall", "plane_likelihood.floor", "plane_likelihood.ceiling",
    "plane_offset.x", "plane_offset.y", "plane_size.w", "plane_size.h",
    "plane_params.0", "plane_params.1", "plane_params.2",
    "line_likelihood", "line_offset", "line_orientation",
)


@dataclass
class DetectionMaps:
    plane_likelihood: np.ndarray   # (h, w, 3)
    plane_offset: np.ndarray       # (h, w, 2)
    plane_size: np.ndarray         # (h, w, 2)
    plane_params: np.ndarray       # (h, w, 3)
    line_likelihood: np.ndarray    # (h, w)
    line_offset: np.ndarray        # (h, w)
    line_orientation: np.ndarray   # (h, w)
    stride: int = STRIDE
    camera: Optional[CameraIntrinsics] = None

    @classmethod
    def empty(cls, dims, stride: int = STRIDE, camera=None) -> "DetectionMaps":
        h, w = map_dims(dims, stride)
        return cls(np.zeros((h, w, 3)), np.zeros((h, w, 2)), np.zeros((h, w, 2)),
                   np.zeros((h, w, 3)), np.zeros((h, w)), np.zeros((h, w)), np.zeros((h, w)),
                   stride, camera)

    @property
    def shape(self) -> tuple[int, int]:
        return self.line_likelihood.shape

    @property
    def input_dims(self) -> tuple[int, int]:
        h, w = self.shape
        return (h * self.stride, w * self.stride)

    def rasters(self) -> list[np.ndarray]:
        """The 13 single-channel rasters in ``RASTER_NAMES`` order."""
        out = [self.plane_likelihood[..., c] for c in range(3)]
        out += [self.plane_offset[..., c] for c in range(2)]
        out += [self.plane_size[..., c] for c in range(2)]
        out += [self.plane_params[..., c] for c in range(3)]
        out += [self.line_likelihood, self.line_offset, self.line_orientation]
        return out

    @classmethod
    def from_rasters(cls, rasters, stride: int = STRIDE, camera=None) -> "DetectionMaps":
        if len(rasters) != len(RASTER_NAMES):
            raise ValueError(f"expected {len(RASTER_NAMES)} rasters, got {len(rasters)}")
        shapes = {np.shape(r) for r in rasters}
        if len(shapes) != 1:
            raise ValueError(f"rasters disagree in shape: {sorted(shapes)}")
        r = [np.asarray(a, dtype=float) for a in rasters]
        return cls(np.stack(r[0:3], -1), np.stack(r[3:5], -1), np.stack(r[5:7], -1),
                   np.stack(r[7:10], -1), r[10], r[11], r[12], stride, camera)


@dataclass(frozen=True)
class Peak:
    x: int
    y: int
    channel: int
    score: float


def map_dims(dims, stride: int = STRIDE) -> tuple[int, int]:
    height, width = dims
    if height % stride or width % stride:
        raise ValueError(f"image size {width}x{height} is not a multiple of the stride {stride}")
    return height // stride, width // stride


# --------------------------------------------------------------------------- encoding

def corner_radius(width: float, height: float, min_overlap: float = MIN_OVERLAP) -> float:
    """Smallest corner displacement at which a box still reaches ``min_overlap`` IoU.

    Three displacement patterns are considered: the box translated diagonally,
    shrunk on all sides and grown on all sides; each gives a quadratic in the
    displacement and the smallest positive root over the three is returned.
    """
    w, h, t = float(width), float(height), float(min_overlap)
    s = w + h
    # translated: (w - r)(h - r) = 2t wh / (1 + t)
    r1 = (s - math.sqrt(s * s - 4.0 * w * h * (1.0 - t) / (1.0 + t))) / 2.0
    # shrunk: (w - 2r)(h - 2r) = t wh
    r2 = (2.0 * s - math.sqrt(4.0 * s * s - 16.0 * (1.0 - t) * w * h)) / 8.0
    # grown: wh = t (w + 2r)(h + 2r)
    r3 = (-2.0 * t * s + math.sqrt(4.0 * t * t * s * s + 16.0 * t * (1.0 - t) * w * h)) / (8.0 * t)
    return min(r for r in (r1, r2, r3) if r > 0)


def gaussian_radius(size, min_overlap: float = MIN_OVERLAP) -> float:
    """Size-adaptive standard deviation of a plane centre splat, in map pixels."""
    w, h = size
    if not (w > 0 and h > 0):
        raise ValueError(f"box size must be positive, got {size}")
    return max(corner_radius(w, h, min_overlap), 2.0) / 3.0


def encode_plane_maps(scene: Scene, dims=None, maps: Optional[DetectionMaps] = None) -> DetectionMaps:
    """Splat plane centres, offsets, sizes and ``n/d`` parameters into map rasters."""
    dims = dims or scene.camera.dims
    maps = maps or DetectionMaps.empty(dims, camera=scene.camera)
    h, w = maps.shape
    stride = maps.stride
    ys, xs = np.mgrid[0:h, 0:w]
    for det in scene.planes:
        cx, cy = det.box.center[0] / stride, det.box.center[1] / stride
        ux, uy = math.floor(cx), math.floor(cy)
        if not (0 <= ux < w and 0 <= uy < h):
            raise CenterOutOfBounds(f"plane centre {det.box.center} lies outside the image")
        sw, sh = det.box.size[0] / stride, det.box.size[1] / stride
        sigma = gaussian_radius((sw, sh))
        channel = PLANE_CHANNELS.index(det.category)
        blob = np.exp(-((xs - ux) ** 2 + (ys - uy) ** 2) / (2.0 * sigma * sigma))
        np.maximum(maps.plane_likelihood[..., channel], blob, out=maps.plane_likelihood[..., channel])
        maps.plane_offset[uy, ux] = (cx - ux, cy - uy)
        maps.plane_size[uy, ux] = (sw, sh)
        maps.plane_params[uy, ux] = det.plane.param
    return maps


def _line_rows(line: Line2D, stride: int, h: int) -> range:
    if line.y_min > line.y_max:
        raise EmptyExtent(f"line extent [{line.y_min}, {line.y_max}] is empty")
    lo = math.ceil(line.y_min / stride)
    hi = math.floor(line.y_max / stride)
    if lo > hi:
        lo = hi = int(round(0.5 * (line.y_min + line.y_max) / stride))
    return range(max(lo, 0), min(hi, h - 1) + 1)


def encode_line_maps(scene: Scene, dims=None, maps: Optional[DetectionMaps] = None) -> DetectionMaps:
    """Rasterise each line as one 1D Gaussian per map row it spans."""
    dims = dims or scene.camera.dims
    maps = maps or DetectionMaps.empty(dims, camera=scene.camera)
    h, w = maps.shape
    stride = maps.stride
    xs = np.arange(w)
    for det in scene.lines:
        line = det.line
        c, s = math.cos(line.theta), math.sin(line.theta)
        if abs(c) < 1e-9:
            logger.warning("skipping horizontal line %s: not representable per row", line)
            continue
        b_map = line.b / stride
        for row in _line_rows(line, stride, h):
            tx = (b_map - row * s) / c
            ux = math.floor(tx)
            if not 0 <= ux < w:
                continue
            profile = np.exp(-((xs - ux) ** 2) / (2.0 * LINE_SIGMA ** 2))
            np.maximum(maps.line_likelihood[row], profile, out=maps.line_likelihood[row])
            maps.line_offset[row, ux] = tx - ux
            maps.line_orientation[row, ux] = line.theta
    return maps


def encode_maps(scene: Scene, dims=None) -> DetectionMaps:
    maps = encode_plane_maps(scene, dims)
    return encode_line_maps(scene, dims, maps)


# --------------------------------------------------------------------------- decoding

def local_maxima(raster: np.ndarray) -> np.ndarray:
    """Mask of strict 3x3 local maxima; ties go to the smaller row-major index."""
    r = np.asarray(raster, dtype=float)
    h, w = r.shape
    pad = np.pad(r, 1, constant_values=-np.inf)
    mask = np.ones(r.shape, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            nb = pad[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
            if dy < 0 or (dy == 0 and dx < 0):
                mask &= r > nb
            else:
                mask &= r >= nb
    return mask


def extract_peaks(raster: np.ndarray, threshold: float, top_k: int, channel: int = 0) -> list[Peak]:
    r = np.asarray(raster, dtype=float)
    ys, xs = np.nonzero(local_maxima(r) & (r >= threshold))
    scores = r[ys, xs]
    order = np.lexsort((xs, ys, -scores))[:top_k]
    return [Peak(int(xs[i]), int(ys[i]), channel, float(scores[i])) for i in order]


def _plane_peaks(maps: DetectionMaps, threshold: float, top_k: int) -> list[Peak]:
    peaks = []
    for c in range(maps.plane_likelihood.shape[-1]):
        peaks += extract_peaks(maps.plane_likelihood[..., c], threshold, top_k, channel=c)
    peaks.sort(key=lambda p: (-p.score, p.y, p.x, p.channel))
    return peaks[:top_k]


def decode_planes(maps: DetectionMaps, threshold: float = 0.3, top_k: int = 10) -> list[PlaneDetection]:
    stride = maps.stride
    out = []
    for p in _plane_peaks(maps, threshold, top_k):
        ox, oy = maps.plane_offset[p.y, p.x]
        sw, sh = maps.plane_size[p.y, p.x]
        category = PLANE_CHANNELS[p.channel]
        try:
            plane = normalize_plane(maps.plane_params[p.y, p.x], category)
            box = BoundingBox((stride * (p.x + ox), stride * (p.y + oy)), (stride * sw, stride * sh))
        except (DegenerateParameter, ValueError) as exc:
            logger.warning("dropping %s candidate at (%d, %d): %s", category, p.x, p.y, exc)
            continue
        out.append(PlaneDetection(box, plane, p.score))
    return out


def _ridge_extent(maps: DetectionMaps, x: int, y: int, b_map: float, theta: float,
                  threshold: float) -> tuple[int, int]:
    like = maps.line_likelihood
    h, w = like.shape
    c, s = math.cos(theta), math.sin(theta)

    def on_ridge(row):
        if not 0 <= row < h or abs(c) < 1e-12:
            return False
        u = math.floor((b_map - row * s) / c)
        lo, hi = max(u - 1, 0), min(u + 2, w)
        return lo < hi and bool(np.any(like[row, lo:hi] >= threshold))

    top = bottom = y
    while on_ridge(top - 1):
        top -= 1
    while on_ridge(bottom + 1):
        bottom += 1
    return top, bottom


def decode_lines(maps: DetectionMaps, threshold: float = 0.3, top_k: int = 20) -> list[LineDetection]:
    stride = maps.stride
    out = []
    for p in extract_peaks(maps.line_likelihood, threshold, top_k):
        offset = maps.line_offset[p.y, p.x]
        theta = float(maps.line_orientation[p.y, p.x])
        b_map = (p.x + offset) * math.cos(theta) + p.y * math.sin(theta)
        top, bottom = _ridge_extent(maps, p.x, p.y, b_map, theta, threshold)
        line = Line2D(theta, stride * b_map, stride * top, stride * bottom)
        out.append(LineDetection(line, p.score))
    return out


# --------------------------------------------------------------------------- suppression

def nms_planes(candidates, iou_threshold: float = 0.5) -> list[PlaneDetection]:
    """Class-agnostic greedy box NMS, then keep at most one floor and one ceiling."""
    order = sorted(range(len(candidates)), key=lambda i: -candidates[i].score)
    kept: list[PlaneDetection] = []
    for i in order:
        cand = candidates[i]
        if all(cand.box.iou(k.box) <= iou_threshold for k in kept):
            kept.append(cand)
    out, seen = [], set()
    for det in kept:
        if det.category in ("floor", "ceiling"):
            if det.category in seen:
                continue
            seen.add(det.category)
        out.append(det)
    return out


def lines_intersect_in_image(a: Line2D, b: Line2D, dims) -> bool:
    height, width = dims
    p = np.cross(a.homogeneous, b.homogeneous)
    if abs(p[2]) < 1e-12:
        return False
    x, y = p[0] / p[2], p[1] / p[2]
    return 0 <= x < width and 0 <= y < height


def max_row_distance(a: Line2D, b: Line2D) -> Optional[float]:
    """Largest x gap between two lines over their shared rows (None if disjoint)."""
    y0, y1 = max(a.y_min, b.y_min), min(a.y_max, b.y_max)
    if y0 > y1:
        return None
    ys = np.array([y0, y1])
    return float(np.max(np.abs(a.x_at(ys) - b.x_at(ys))))


def lines_conflict(a: Line2D, b: Line2D, x_threshold: float, dims=None) -> bool:
    if dims is not None and lines_intersect_in_image(a, b, dims):
        return True
    gap = max_row_distance(a, b)
    return gap is not None and gap < x_threshold


def nms_lines(candidates, x_threshold: float = 10.0, dims=None) -> list[LineDetection]:
    """Greedy line NMS: drop a line that crosses or runs close to a stronger one.

    Without ``dims`` the in-image intersection rule is skipped.
    """
    if not x_threshold > 0:
        raise ValueError("x_threshold must be positive")
    order = sorted(range(len(candidates)), key=lambda i: -candidates[i].score)
    kept: list[LineDetection] = []
    for i in order:
        cand = candidates[i]
        if not any(lines_conflict(cand.line, k.line, x_threshold, dims) for k in kept):
            kept.append(cand)
    return kept


def decode_scene(maps: DetectionMaps, camera: Optional[CameraIntrinsics] = None,
                 plane_threshold: float = 0.3, line_threshold: float = 0.3,
                 plane_top_k: int = 10, line_top_k: int = 20,
                 plane_iou: float = 0.5, line_nms_px: float = 10.0) -> Scene:
    """Decode both raster families and apply both suppression passes."""
    camera = camera or maps.camera
    if camera is None:
        raise ValueError("decoding a scene needs camera intrinsics")
    planes = nms_planes(decode_planes(maps, plane_threshold, plane_top_k), plane_iou)
    lines = nms_lines(decode_lines(maps, line_threshold, line_top_k), line_nms_px, camera.dims)
    return Scene(camera, planes, lines)
