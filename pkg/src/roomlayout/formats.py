"""File formats: depth rasters, PGM label maps, scene/layout/metrics JSON, detection maps."""

from __future__ import annotations

import json
import logging
import math
import os
import struct
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from .decode import RASTER_NAMES, DetectionMaps
from .errors import DegenerateParameter, FormatError
from .types import (CATEGORIES, VIRTUAL, BoundingBox, CameraIntrinsics, GroundTruthRefs, Line2D,
                    LineDetection, PlaneDetection, Scene, normalize_plane)

logger = logging.getLogger(__name__)

DEPTH_MAGIC = b"LDPTH1\n"
_DEPTH_HEADER = struct.Struct("<II")
MAPS_FORMAT = "layout-maps/1"
LAYOUT_FORMAT = "layout/1"
METRICS_SCHEMA = "layout-metrics/1"


# --------------------------------------------------------------------------- atomic writes

def write_atomic(path, data: bytes) -> None:
    """Write ``data`` to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(doc) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n").encode("utf-8")


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _load_json(path):
    try:
        return json.loads(_read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc


# --------------------------------------------------------------------------- depth

def encode_depth(depth: np.ndarray) -> bytes:
    depth = np.asarray(depth)
    if depth.ndim != 2:
        raise ValueError("depth raster must be 2D")
    h, w = depth.shape
    return DEPTH_MAGIC + _DEPTH_HEADER.pack(w, h) + depth.astype("<f4").tobytes()


def decode_depth(data: bytes, offset: int = 0, exact: bool = True) -> tuple[np.ndarray, int]:
    """Parse one depth block at ``offset``; returns ``(raster, end offset)``.

    With ``exact`` the block must end the buffer.
    """
    head = offset + len(DEPTH_MAGIC)
    if data[offset:head] != DEPTH_MAGIC:
        raise FormatError("bad depth magic")
    if len(data) < head + _DEPTH_HEADER.size:
        raise FormatError("truncated depth header")
    w, h = _DEPTH_HEADER.unpack_from(data, head)
    start = head + _DEPTH_HEADER.size
    end = start + 4 * w * h
    if len(data) < end or (exact and len(data) != end):
        raise FormatError(f"depth payload for {w}x{h} needs {4 * w * h} bytes, "
                          f"file has {len(data) - start}")
    arr = np.frombuffer(data, dtype="<f4", count=w * h, offset=start).reshape(h, w)
    return arr.astype(np.float32), end


def write_depth(path, depth: np.ndarray) -> None:
    write_atomic(path, encode_depth(depth))


def read_depth(path) -> np.ndarray:
    return decode_depth(_read_bytes(path))[0]


# --------------------------------------------------------------------------- labels (PGM)

def encode_pgm(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError("label map must be 2D")
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise ValueError("labels must fit in one byte")
    h, w = labels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + labels.astype(np.uint8).tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FormatError("not a binary PGM (P5) file")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError("non-numeric PGM header field") from exc
    if maxval != 255:
        raise FormatError(f"PGM maxval must be 255, got {maxval}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("PGM header must end with one whitespace byte")
    payload = data[pos + 1:]
    if len(payload) != w * h:
        raise FormatError(f"PGM payload has {len(payload)} bytes, header says {w}x{h}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()


def write_labels(path, labels: np.ndarray) -> None:
    write_atomic(path, encode_pgm(labels))


def read_labels(path) -> np.ndarray:
    return decode_pgm(_read_bytes(path))


# --------------------------------------------------------------------------- scene JSON

_SCENE_KEYS = {"camera", "planes", "lines", "gt"}
_CAMERA_KEYS = {"fx", "fy", "cx", "cy", "width", "height"}
_PLANE_KEYS = {"category", "center", "size", "param", "score"}
_LINE_KEYS = {"theta", "b", "y_min", "y_max", "score"}
_GT_KEYS = {"labels", "depth", "corners"}


class _Reader:
    """Strict field access that records unknown keys; lenient mode only warns."""

    def __init__(self, source: str, lenient: bool):
        self.source = source
        self.lenient = lenient
        self.warnings: list[str] = []

    def obj(self, value, where: str, allowed: set, required: set) -> dict:
        if not isinstance(value, dict):
            raise FormatError(f"{self.source}: {where} must be an object")
        unknown = sorted(set(value) - allowed)
        if unknown:
            msg = f"{self.source}: unknown field(s) {unknown} in {where}"
            if not self.lenient:
                raise FormatError(msg + " (use --lenient to accept)")
            self.warnings.append(msg)
            logger.warning(msg)
        missing = sorted(required - set(value))
        if missing:
            raise FormatError(f"{self.source}: {where} is missing {missing}")
        return value

    def number(self, value, where: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise FormatError(f"{self.source}: {where} must be a finite number")
        return float(value)

    def integer(self, value, where: str) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise FormatError(f"{self.source}: {where} must be an integer")
        return value

    def vector(self, value, n: int, where: str) -> list[float]:
        if not isinstance(value, list) or len(value) != n:
            raise FormatError(f"{self.source}: {where} must be a list of {n} numbers")
        return [self.number(v, f"{where}[{i}]") for i, v in enumerate(value)]

    def array(self, value, where: str) -> list:
        if not isinstance(value, list):
            raise FormatError(f"{self.source}: {where} must be a list")
        return value


def camera_from_dict(doc, reader: _Reader) -> CameraIntrinsics:
    doc = reader.obj(doc, "camera", _CAMERA_KEYS, _CAMERA_KEYS)
    try:
        return CameraIntrinsics(*(reader.number(doc[k], f"camera.{k}") for k in ("fx", "fy", "cx", "cy")),
                                reader.integer(doc["width"], "camera.width"),
                                reader.integer(doc["height"], "camera.height"))
    except ValueError as exc:
        raise FormatError(f"{reader.source}: {exc}") from exc


def scene_from_dict(doc, source: str = "<scene>", lenient: bool = False) -> tuple[Scene, list[str]]:
    """Parse a scene document; returns the scene and any lenient-mode warnings."""
    r = _Reader(source, lenient)
    doc = r.obj(doc, "scene", _SCENE_KEYS, {"camera", "planes", "lines"})
    camera = camera_from_dict(doc["camera"], r)
    planes = []
    for i, p in enumerate(r.array(doc["planes"], "planes")):
        where = f"planes[{i}]"
        p = r.obj(p, where, _PLANE_KEYS, {"category", "center", "size", "param"})
        cat = p["category"]
        if cat not in CATEGORIES or cat == VIRTUAL:
            raise FormatError(f"{source}: {where}.category {cat!r} is not wall/floor/ceiling")
        score = r.number(p.get("score", 1.0), f"{where}.score")
        try:
            plane = normalize_plane(r.vector(p["param"], 3, f"{where}.param"), cat)
            box = BoundingBox(r.vector(p["center"], 2, f"{where}.center"),
                              r.vector(p["size"], 2, f"{where}.size"))
        except (ValueError, DegenerateParameter, FormatError) as exc:
            raise FormatError(f"{source}: {where}: {exc}") from exc
        planes.append(PlaneDetection(box, plane, score))
    lines = []
    for i, l in enumerate(r.array(doc["lines"], "lines")):
        where = f"lines[{i}]"
        l = r.obj(l, where, _LINE_KEYS, {"theta", "b", "y_min", "y_max"})
        try:
            line = Line2D(*(r.number(l[k], f"{where}.{k}") for k in ("theta", "b", "y_min", "y_max")))
        except ValueError as exc:
            raise FormatError(f"{source}: {where}: {exc}") from exc
        lines.append(LineDetection(line, r.number(l.get("score", 1.0), f"{where}.score")))
    gt = None
    if doc.get("gt") is not None:
        g = r.obj(doc["gt"], "gt", _GT_KEYS, set())
        corners = g.get("corners")
        if corners is not None:
            corners = [r.vector(c, 2, f"gt.corners[{i}]") for i, c in enumerate(r.array(corners, "gt.corners"))]
        for key in ("labels", "depth"):
            if g.get(key) is not None and not isinstance(g[key], str):
                raise FormatError(f"{source}: gt.{key} must be a path string")
        gt = GroundTruthRefs(g.get("labels"), g.get("depth"), corners)
    return Scene(camera, planes, lines, gt), r.warnings


def _floats(values) -> list[float]:
    return [float(v) for v in values]


def scene_to_dict(scene: Scene) -> dict:
    doc = {
        "camera": scene.camera.to_dict(),
        "planes": [{"category": p.category, "center": _floats(p.box.center), "size": _floats(p.box.size),
                    "param": _floats(p.plane.param), "score": float(p.score)} for p in scene.planes],
        "lines": [{"theta": float(l.line.theta), "b": float(l.line.b), "y_min": float(l.line.y_min),
                   "y_max": float(l.line.y_max), "score": float(l.score)} for l in scene.lines],
    }
    if scene.gt is not None:
        gt = {}
        if scene.gt.labels is not None:
            gt["labels"] = scene.gt.labels
        if scene.gt.depth is not None:
            gt["depth"] = scene.gt.depth
        if scene.gt.corners is not None:
            gt["corners"] = [_floats(c) for c in scene.gt.corners]
        doc["gt"] = gt
    return doc


def write_scene(path, scene: Scene) -> None:
    write_atomic(path, dumps_json(scene_to_dict(scene)))


def read_scene(path, lenient: bool = False) -> Scene:
    return scene_from_dict(_load_json(path), str(path), lenient)[0]


# --------------------------------------------------------------------------- detection maps

def maps_to_bytes(maps: DetectionMaps, data_name: str = "maps.bin") -> tuple[bytes, bytes]:
    """Sidecar JSON and concatenated raster blocks for ``maps``."""
    h, w = maps.shape
    sidecar = {
        "format": MAPS_FORMAT,
        "stride": maps.stride,
        "width": w,
        "height": h,
        "camera": maps.camera.to_dict() if maps.camera is not None else None,
        "data": data_name,
        "rasters": list(RASTER_NAMES),
    }
    blob = b"".join(encode_depth(r) for r in maps.rasters())
    return dumps_json(sidecar), blob


def write_maps(path, maps: DetectionMaps) -> None:
    """Write the sidecar to ``path`` and the rasters next to it (``<stem>.bin``)."""
    path = Path(path)
    data_name = path.with_suffix(".bin").name
    sidecar, blob = maps_to_bytes(maps, data_name)
    write_atomic(path.parent / data_name, blob)
    write_atomic(path, sidecar)


def read_maps(path, lenient: bool = False) -> DetectionMaps:
    path = Path(path)
    doc = _load_json(path)
    r = _Reader(str(path), lenient)
    doc = r.obj(doc, "maps", {"format", "stride", "width", "height", "camera", "data", "rasters"},
                {"format", "stride", "width", "height", "data", "rasters"})
    if doc["format"] != MAPS_FORMAT:
        raise FormatError(f"{path}: unsupported maps format {doc['format']!r}")
    stride = r.integer(doc["stride"], "stride")
    w, h = r.integer(doc["width"], "width"), r.integer(doc["height"], "height")
    if stride <= 0:
        raise FormatError(f"{path}: stride must be positive")
    names = r.array(doc["rasters"], "rasters")
    if sorted(names) != sorted(RASTER_NAMES) or len(names) != len(RASTER_NAMES):
        raise FormatError(f"{path}: rasters must name exactly {list(RASTER_NAMES)}")
    camera = camera_from_dict(doc["camera"], r) if doc.get("camera") is not None else None
    data = _read_bytes(path.parent / str(doc["data"]))
    blocks = {}
    offset = 0
    for name in names:
        arr, offset = decode_depth(data, offset, exact=False)
        if arr.shape != (h, w):
            raise FormatError(f"{path}: raster {name} is {arr.shape[1]}x{arr.shape[0]}, expected {w}x{h}")
        blocks[name] = arr
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes after the last raster")
    return DetectionMaps.from_rasters([blocks[n] for n in RASTER_NAMES], stride, camera)


# --------------------------------------------------------------------------- layout / metrics

def _plane_dict(plane, label: Optional[int] = None, initial=None) -> dict:
    doc = {"normal": _floats(plane.normal), "offset": float(plane.offset)}
    if plane.offset != 0:
        doc["param"] = _floats(plane.param)
    if label is not None:
        doc = {"label": label, **doc}
    if initial is not None:
        doc["initial_param"] = _floats(initial.param)
    return doc


def layout_to_dict(layout) -> dict:
    from .geometry import CEILING_LABEL, FLOOR_LABEL, WALL_LABEL0

    initial = layout.initial_walls or [None] * len(layout.walls)
    doc = {
        "format": LAYOUT_FORMAT,
        "camera": layout.camera.to_dict(),
        "walls": [_plane_dict(w, WALL_LABEL0 + i, init) for i, (w, init) in enumerate(zip(layout.walls, initial))],
        "floor": _plane_dict(layout.floor, FLOOR_LABEL) if layout.floor is not None else None,
        "ceiling": _plane_dict(layout.ceiling, CEILING_LABEL) if layout.ceiling is not None else None,
        "verdicts": [{
            "pair": list(v.pair),
            "kind": v.kind,
            "boundary": v.boundary.to_dict(),
            "matched_line": v.matched_detection,
            "virtual_plane": _plane_dict(v.virtual) if v.virtual is not None else None,
        } for v in layout.verdicts],
        "corners": [{"pair": c.pair, "side": c.side, "surface": c.surface,
                     "xy": _floats(c.xy), "xyz": _floats(c.xyz)} for c in layout.corners],
        "corners_2d": [_floats(c.xy) for c in layout.corners],
        "corners_3d": [_floats(c.xyz) for c in layout.corners],
        "report": layout.report.to_dict() if layout.report is not None else None,
    }
    return doc


def write_layout(path, layout) -> None:
    write_atomic(path, dumps_json(layout_to_dict(layout)))


def metrics_document(frames: list[dict]) -> dict:
    """Metrics JSON: per-frame values and means over frames where a value exists."""
    mean = {}
    for key in ("iou", "pe", "ee", "rmse"):
        vals = [f[key] for f in frames if f.get(key) is not None and math.isfinite(f[key])]
        mean[key] = float(np.mean(vals)) if vals else None
    clean = [{k: (v if not (isinstance(v, float) and not math.isfinite(v)) else None) for k, v in f.items()}
             for f in frames]
    return {"schema": METRICS_SCHEMA, "frames": clean, "mean": mean}
