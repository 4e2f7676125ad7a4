"""Layout evaluation: segment matching, IoU, pixel error, edge error, depth RMSE."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, EmptyBoundary, NoValidPixels

INVALID_DEPTH = -1.0


@dataclass
class MatchResult:
    pairs: list = field(default_factory=list)           # (gt label, pred label, iou)
    unmatched_gt: list = field(default_factory=list)
    unmatched_pred: list = field(default_factory=list)

    @property
    def mapping(self) -> dict:
        """pred label -> matched gt label."""
        return {p: g for g, p, _ in self.pairs}


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if np.shape(a) != np.shape(b):
        raise DimensionMismatch(f"shapes differ: {np.shape(a)} vs {np.shape(b)}")


def _contingency(pred: np.ndarray, gt: np.ndarray):
    p_labels, p_idx = np.unique(pred, return_inverse=True)
    g_labels, g_idx = np.unique(gt, return_inverse=True)
    table = np.zeros((len(g_labels), len(p_labels)), dtype=np.int64)
    np.add.at(table, (g_idx.ravel(), p_idx.ravel()), 1)
    return g_labels, p_labels, table


def match_segments(pred: np.ndarray, gt: np.ndarray) -> MatchResult:
    """Greedy matching, largest ground-truth segment first, each label used once."""
    _check_dims(pred, gt)
    g_labels, p_labels, table = _contingency(np.asarray(pred), np.asarray(gt))
    g_sizes = table.sum(axis=1)
    p_sizes = table.sum(axis=0)
    iou = table / (g_sizes[:, None] + p_sizes[None, :] - table)
    order = sorted(range(len(g_labels)), key=lambda g: (-g_sizes[g], g_labels[g]))
    used = np.zeros(len(p_labels), dtype=bool)
    result = MatchResult()
    for g in order:
        scores = np.where(used, -1.0, iou[g])
        best = int(np.argmax(scores))     # first maximum = smallest pred label
        if scores[best] > 0:
            used[best] = True
            result.pairs.append((int(g_labels[g]), int(p_labels[best]), float(iou[g, best])))
        else:
            result.unmatched_gt.append(int(g_labels[g]))
    result.unmatched_pred = [int(p) for p, u in zip(p_labels, used) if not u]
    return result


def layout_iou(match: MatchResult) -> float:
    """Mean IoU in percent; unmatched ground-truth segments count as zero."""
    n = len(match.pairs) + len(match.unmatched_gt)
    if n == 0:
        return 0.0
    return 100.0 * sum(iou for _, _, iou in match.pairs) / n


def pixel_error(pred: np.ndarray, gt: np.ndarray, match: MatchResult = None) -> float:
    """Percentage of pixels whose prediction maps to a different ground-truth segment."""
    _check_dims(pred, gt)
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    match = match or match_segments(pred, gt)
    mapped = np.full(pred.shape, -1, dtype=np.int64)
    for p, g in match.mapping.items():
        mapped[pred == p] = g
    wrong = mapped != gt
    return 100.0 * float(np.count_nonzero(wrong)) / wrong.size


def boundary_mask(labels: np.ndarray) -> np.ndarray:
    """Pixels with a 4-neighbour of a different label (no boundary at the image border)."""
    labels = np.asarray(labels)
    mask = np.zeros(labels.shape, dtype=bool)
    dx = labels[:, 1:] != labels[:, :-1]
    dy = labels[1:, :] != labels[:-1, :]
    mask[:, 1:] |= dx
    mask[:, :-1] |= dx
    mask[1:, :] |= dy
    mask[:-1, :] |= dy
    return mask


def chamfer_distance(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    """Symmetric Chamfer distance between two pixel sets: half the sum of directed means."""
    _check_dims(mask_a, mask_b)
    if not mask_a.any() or not mask_b.any():
        raise EmptyBoundary("both boundary sets must be non-empty")
    to_b = ndimage.distance_transform_edt(~mask_b)
    to_a = ndimage.distance_transform_edt(~mask_a)
    return 0.5 * (float(np.mean(to_b[mask_a])) + float(np.mean(to_a[mask_b])))


def edge_error(pred: np.ndarray, gt: np.ndarray) -> float:
    _check_dims(pred, gt)
    return chamfer_distance(boundary_mask(pred), boundary_mask(gt))


def depth_rmse(pred: np.ndarray, gt: np.ndarray) -> float:
    """RMSE over pixels valid in both maps (invalid = -1)."""
    _check_dims(pred, gt)
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    valid = (pred != INVALID_DEPTH) & (gt != INVALID_DEPTH) & np.isfinite(pred) & np.isfinite(gt)
    if not valid.any():
        raise NoValidPixels("no pixel is valid in both depth maps")
    diff = pred[valid] - gt[valid]
    return float(np.sqrt(np.mean(diff * diff)))


def evaluate_frame(pred_labels, gt_labels, pred_depth=None, gt_depth=None) -> dict:
    """All four metrics for one frame; edge error is NaN when a map has no boundary."""
    match = match_segments(pred_labels, gt_labels)
    try:
        ee = edge_error(pred_labels, gt_labels)
    except EmptyBoundary:
        ee = 0.0 if not boundary_mask(pred_labels).any() and not boundary_mask(gt_labels).any() \
            else float("nan")
    out = {"iou": layout_iou(match), "pe": pixel_error(pred_labels, gt_labels, match), "ee": ee}
    if pred_depth is not None and gt_depth is not None:
        out["rmse"] = depth_rmse(pred_depth, gt_depth)
    return out
