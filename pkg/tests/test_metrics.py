import math

import numpy as np
import pytest

from roomlayout.errors import DimensionMismatch, EmptyBoundary, NoValidPixels
from roomlayout.metrics import (boundary_mask, chamfer_distance, depth_rmse, edge_error, evaluate_frame,
                                layout_iou, match_segments, pixel_error)


def random_labels(rng, h=48, w=64, n=5):
    """Piecewise-constant maps: a few random half-plane cuts."""
    labels = np.zeros((h, w), dtype=np.uint8)
    ys, xs = np.mgrid[0:h, 0:w]
    for lab in range(1, n):
        a, b = rng.normal(size=2)
        c = rng.uniform(-1, 1) * (abs(a) * w + abs(b) * h) / 2
        labels[a * (xs - w / 2) + b * (ys - h / 2) > c] = lab
    if len(np.unique(labels)) < 2:
        return random_labels(rng, h, w, n)
    return labels


def brute_boundary(labels):
    h, w = labels.shape
    out = []
    for i in range(h):
        for j in range(w):
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < h and 0 <= jj < w and labels[ii, jj] != labels[i, j]:
                    out.append((i, j))
                    break
    return out


def brute_chamfer(pa, pb):
    a = np.array(pa, dtype=float)
    b = np.array(pb, dtype=float)
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return 0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean())


def test_edge_error_equals_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(50):
        a, b = random_labels(rng), random_labels(rng)
        pa, pb = brute_boundary(a), brute_boundary(b)
        assert sorted(zip(*np.nonzero(boundary_mask(a)))) == pa
        assert edge_error(a, b) == brute_chamfer(pa, pb)


def test_chamfer_single_pixels_and_symmetry():
    a = np.zeros((20, 20), dtype=bool)
    b = np.zeros((20, 20), dtype=bool)
    a[5, 5] = True
    b[8, 9] = True
    assert chamfer_distance(a, b) == 5.0
    rng = np.random.default_rng(12)
    for _ in range(10):
        x, y = random_labels(rng), random_labels(rng)
        assert edge_error(x, y) == pytest.approx(edge_error(y, x), abs=1e-12)
        assert edge_error(x, x) == 0.0


def test_step_boundary_shift():
    a = np.zeros((10, 20), dtype=np.uint8)
    b = np.zeros((10, 20), dtype=np.uint8)
    a[:, 10:] = 1
    b[:, 15:] = 1
    # both sides of each step are boundary pixels: columns 9,10 against 14,15
    assert edge_error(a, b) == 4.5


def test_empty_boundary_raises():
    flat = np.zeros((5, 5), dtype=np.uint8)
    with pytest.raises(EmptyBoundary):
        edge_error(flat, random_labels(np.random.default_rng(0), 5, 5))


def brute_match(pred, gt):
    g_labels = sorted(set(gt.ravel().tolist()), key=lambda g: (-(gt == g).sum(), g))
    used, pairs, unmatched = set(), [], []
    for g in g_labels:
        best, best_iou = None, 0.0
        for p in sorted(set(pred.ravel().tolist())):
            if p in used:
                continue
            inter = union = 0
            for x, y in zip(pred.ravel(), gt.ravel()):
                inter += x == p and y == g
                union += x == p or y == g
            iou = inter / union
            if iou > best_iou:
                best, best_iou = p, iou
        if best is None:
            unmatched.append(g)
        else:
            used.add(best)
            pairs.append((g, best, best_iou))
    return pairs, unmatched


def test_match_iou_pe_equal_pixel_loop_oracles():
    rng = np.random.default_rng(13)
    for _ in range(20):
        gt = random_labels(rng, 16, 20, 4)
        pred = random_labels(rng, 16, 20, 5)
        pairs, unmatched = brute_match(pred, gt)
        m = match_segments(pred, gt)
        assert [(g, p) for g, p, _ in m.pairs] == [(g, p) for g, p, _ in pairs]
        for (_, _, x), (_, _, y) in zip(m.pairs, pairs):
            assert x == pytest.approx(y, abs=1e-15)
        assert m.unmatched_gt == unmatched
        assert layout_iou(m) == pytest.approx(100 * sum(x for *_, x in pairs) / (len(pairs) + len(unmatched)))
        mapping = {p: g for g, p, _ in pairs}
        wrong = sum(mapping.get(int(p), -1) != int(g) for p, g in zip(pred.ravel(), gt.ravel()))
        assert pixel_error(pred, gt) == pytest.approx(100 * wrong / gt.size, abs=1e-12)


def test_quadrant_example():
    gt = np.zeros((4, 4), dtype=np.uint8)
    gt[:, 2:] = 1
    pred = gt.copy()
    pred[:2, :2] = 1       # one quadrant relabelled
    assert pixel_error(pred, gt) == 25.0
    assert pixel_error(gt, gt) == 0.0 and layout_iou(match_segments(gt, gt)) == 100.0


def test_depth_rmse_two_pass_oracle():
    rng = np.random.default_rng(14)
    for _ in range(20):
        a = rng.uniform(0.5, 10, size=(48, 64))
        b = a + rng.normal(scale=0.2, size=a.shape)
        a[rng.uniform(size=a.shape) < 0.1] = -1
        b[rng.uniform(size=a.shape) < 0.1] = -1
        n, acc = 0, 0.0
        for x, y in zip(a.ravel(), b.ravel()):
            if x != -1 and y != -1:
                n += 1
        for x, y in zip(a.ravel(), b.ravel()):
            if x != -1 and y != -1:
                acc += (x - y) ** 2 / n
        assert depth_rmse(a, b) == pytest.approx(math.sqrt(acc), abs=1e-12)


def test_depth_rmse_bias_and_errors():
    a = np.full((4, 4), 2.0)
    assert depth_rmse(a + 0.1, a) == pytest.approx(0.1, abs=1e-12)
    with pytest.raises(NoValidPixels):
        depth_rmse(np.full((2, 2), -1.0), a[:2, :2])
    with pytest.raises(DimensionMismatch):
        depth_rmse(a, a[:2])


def test_evaluate_frame_identity():
    labels = random_labels(np.random.default_rng(15))
    depth = np.ones(labels.shape)
    assert evaluate_frame(labels, labels, depth, depth) == {"iou": 100.0, "pe": 0.0, "ee": 0.0, "rmse": 0.0}
