"""Single-frame reconstruction: detections in, layout, label map and depth out."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .decode import nms_lines
from .errors import EmptyRegion, NoWalls
from .geometry import (CONNECTED, AdjacencyVerdict, Layout, Region, assemble_layout,
                       classify_adjacency, edge_band, fallback_boundary, match_line_to_pair, occluded_verdict,
                       order_walls, plane_pair_image_line, potential_region, rasterize_segmentation,
                       render_depth)
from .optimize import RefineConfig, RefineReport, Triplet, refine_planes
from .types import CEILING, FLOOR, Scene

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReconstructConfig:
    optimize: bool = True
    refine: RefineConfig = field(default_factory=RefineConfig)
    line_nms_px: float = 10.0
    score_threshold: float = 0.3
    # pixels; a matched line farther than this from a connected pair's projected
    # intersection is not used for refinement (None: always used)
    gate_px: Optional[float] = None
    # pixels; connected pairs must meet within this distance of where their boxes
    # touch (None: centre span only)
    band_px: Optional[float] = 40.0


@dataclass
class Reconstruction:
    layout: Layout
    labels: np.ndarray
    depth: np.ndarray


def _best(planes):
    return max(planes, key=lambda p: p.score) if planes else None


def _pair_region(box_i, box_k, dims) -> Optional[Region]:
    try:
        return potential_region(box_i, box_k, dims)
    except EmptyRegion:
        return None


def _gate_ok(verdict: AdjacencyVerdict, line, gate_px) -> bool:
    if gate_px is None:
        return True
    y = verdict.boundary.mid_y
    return abs(float(verdict.boundary.x_at(y)) - float(line.x_at(y))) <= gate_px


def reason(scene: Scene, config: ReconstructConfig = ReconstructConfig()) -> Layout:
    """Order walls, classify adjacent pairs, refine and assemble the layout."""
    camera = scene.camera
    dims = camera.dims
    planes = [p for p in scene.planes if p.score >= config.score_threshold]
    walls = [p for p in planes if p.category == "wall"]
    if not walls:
        raise NoWalls("scene has no wall detections")
    floor = _best([p for p in planes if p.category == FLOOR])
    ceiling = _best([p for p in planes if p.category == CEILING])
    lines = [l for l in scene.lines if l.score >= config.score_threshold]
    lines = nms_lines(lines, config.line_nms_px, dims)

    walls = [walls[i] for i in order_walls(walls)]
    wall_planes = [w.plane for w in walls]
    verdicts = []
    triplets = []
    for a in range(len(walls) - 1):
        b = a + 1
        region = _pair_region(walls[a].box, walls[b].box, dims)
        if region is None:
            cx = walls[a].box.center[0]
            y0 = min(walls[a].box.y0, walls[b].box.y0)
            y1 = max(walls[a].box.y1, walls[b].box.y1)
            verdicts.append(occluded_verdict((a, b), fallback_boundary(Region(cx, cx, y0, y1)), camera))
            continue
        j = match_line_to_pair(region, lines)
        matched = lines[j] if j is not None else None
        band = None if config.band_px is None else edge_band(walls[a].box, walls[b].box, config.band_px)
        verdict = classify_adjacency(wall_planes[a], wall_planes[b], region, matched, camera, (a, b), j,
                                     band)
        verdicts.append(verdict)
        if verdict.kind == CONNECTED and matched is not None and _gate_ok(verdict, matched.line, config.gate_px):
            triplets.append(Triplet.from_line(a, b, j, matched.line))

    initial = list(wall_planes)
    report = None
    if config.optimize and triplets:
        wall_planes, report = refine_planes(wall_planes, triplets, camera, config.refine)
        verdicts = [_refresh(v, wall_planes, camera) for v in verdicts]
    elif config.optimize:
        report = RefineReport(0.0, 0.0, 0, 0, "no_triplets")

    layout = assemble_layout(wall_planes, floor.plane if floor else None,
                             ceiling.plane if ceiling else None, verdicts, camera, dims)
    layout.wall_boxes = [w.box for w in walls]
    layout.initial_walls = initial
    layout.report = report
    return layout


def _refresh(verdict: AdjacencyVerdict, planes, camera) -> AdjacencyVerdict:
    if verdict.kind != CONNECTED:
        return verdict
    i, k = verdict.pair
    try:
        line = plane_pair_image_line(planes[i], planes[k], camera)
    except Exception as exc:  # refinement made the pair degenerate; keep the old boundary
        logger.warning("pair %s: refined planes have no intersection line (%s)", verdict.pair, exc)
        return verdict
    line = replace(line, y_min=verdict.boundary.y_min, y_max=verdict.boundary.y_max)
    return replace(verdict, boundary=line)


def reconstruct(scene: Scene, config: ReconstructConfig = ReconstructConfig()) -> Reconstruction:
    layout = reason(scene, config)
    labels = rasterize_segmentation(layout)
    depth = render_depth(layout, labels)
    return Reconstruction(layout, labels, depth)
