import logging
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from roomlayout.decode import (DetectionMaps, corner_radius, decode_lines, decode_planes, decode_scene,
                               encode_line_maps, encode_maps, encode_plane_maps, extract_peaks,
                               gaussian_radius, local_maxima, nms_lines, nms_planes)
from roomlayout.errors import CenterOutOfBounds, EmptyExtent
from roomlayout.types import (BoundingBox, CameraIntrinsics, Line2D, LineDetection, PlaneDetection, Scene,
                              normalize_plane)

CAM = CameraIntrinsics(500, 500, 320, 240, 640, 480)


def plane_det(center, size, param=(0.1, 0.2, 0.5), category="wall", score=1.0):
    return PlaneDetection(BoundingBox(center, size), normalize_plane(param, category), score)


def numeric_radius(w, h, t=0.7):
    """Smallest displacement reaching IoU t under each corner pattern, by root finding."""
    translated = lambda r: (w - r) * (h - r) / (2 * w * h - (w - r) * (h - r)) - t
    shrunk = lambda r: (w - 2 * r) * (h - 2 * r) / (w * h) - t
    grown = lambda r: w * h / ((w + 2 * r) * (h + 2 * r)) - t
    return min(brentq(translated, 0, min(w, h)), brentq(shrunk, 0, min(w, h) / 2), brentq(grown, 0, 10 * (w + h)))


@pytest.mark.parametrize("size", [(10, 10), (3, 17), (40, 5.5), (100, 80)])
def test_corner_radius_matches_numeric_solve(size):
    assert corner_radius(*size) == pytest.approx(numeric_radius(*size), rel=1e-9)


def test_gaussian_radius_symmetric_monotone_and_floor():
    sigmas = [gaussian_radius((w, w)) for w in (32, 64, 128, 256)]
    assert all(a < b for a, b in zip(sigmas, sigmas[1:]))
    assert gaussian_radius((1, 1)) == pytest.approx(2 / 3)
    assert gaussian_radius((3, 7)) == gaussian_radius((7, 3))


def test_encode_plane_example():
    scene = Scene(CAM, [plane_det((100.4, 60.7), (40, 20))])
    maps = encode_plane_maps(scene)
    wall = maps.plane_likelihood[..., 0]
    assert np.unravel_index(np.argmax(wall), wall.shape) == (15, 25)
    assert wall[15, 25] == 1.0
    np.testing.assert_allclose(maps.plane_offset[15, 25], [0.1, 0.175], atol=1e-12)
    np.testing.assert_allclose(maps.plane_size[15, 25], [10, 5])


def test_encode_plane_out_of_bounds():
    with pytest.raises(CenterOutOfBounds):
        encode_plane_maps(Scene(CAM, [plane_det((700, 60), (40, 20))]))


def test_encode_vertical_line_example():
    scene = Scene(CAM, [], [LineDetection(Line2D(0.0, 160.0, 40.0, 80.0))])
    maps = encode_line_maps(scene)
    for row in range(10, 21):
        assert np.argmax(maps.line_likelihood[row]) == 40
        assert maps.line_likelihood[row, 40] == 1.0
        assert maps.line_offset[row, 40] == 0.0 and maps.line_orientation[row, 40] == 0.0
    assert not maps.line_likelihood[:10].any() and not maps.line_likelihood[21:].any()


def test_line_empty_extent():
    maps = DetectionMaps.empty(CAM.dims)
    line = Line2D(0.0, 160.0, 40.0, 80.0)
    object.__setattr__(line, "y_min", 90.0)
    with pytest.raises(EmptyExtent):
        encode_line_maps(Scene(CAM, [], [LineDetection(line)]), maps=maps)


def test_slanted_line_round_trip_from_any_peak():
    line = Line2D(0.1, 300.0, 20.0, 400.0)
    maps = encode_line_maps(Scene(CAM, [], [LineDetection(line)]))
    rows = np.flatnonzero(maps.line_likelihood.max(axis=1) == 1.0)
    assert len(rows) > 50
    for row in rows:
        x = int(np.argmax(maps.line_likelihood[row]))
        theta = maps.line_orientation[row, x]
        b = 4 * ((x + maps.line_offset[row, x]) * math.cos(theta) + row * math.sin(theta))
        assert abs(theta - 0.1) < 1e-6 and abs(b - 300.0) < 1e-6


def brute_local_max(r):
    h, w = r.shape
    out = np.zeros_like(r, dtype=bool)
    for y in range(h):
        for x in range(w):
            ok = True
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy, xx = y + dy, x + dx
                    if (dy or dx) and 0 <= yy < h and 0 <= xx < w:
                        earlier = (yy, xx) < (y, x)
                        if r[yy, xx] > r[y, x] or (earlier and r[yy, xx] == r[y, x]):
                            ok = False
            out[y, x] = ok
    return out


def test_local_maxima_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(20):
        r = rng.integers(0, 4, size=(9, 11)).astype(float)     # many ties
        np.testing.assert_array_equal(local_maxima(r), brute_local_max(r))


def test_extract_peaks_examples():
    assert extract_peaks(np.zeros((8, 8)), 0.3, 10) == []
    ys, xs = np.mgrid[0:30, 0:30]
    one = np.exp(-((xs - 12) ** 2 + (ys - 7) ** 2) / 8.0)
    peaks = extract_peaks(one, 0.3, 10)
    assert [(p.x, p.y) for p in peaks] == [(12, 7)]
    two = np.maximum(one, 0.8 * np.exp(-((xs - 14) ** 2 + (ys - 7) ** 2) / 8.0))
    peaks = extract_peaks(two, 0.3, 10)
    expected = [(x, y) for y, x in zip(*np.nonzero(brute_local_max(two) & (two >= 0.3)))]
    assert [(p.x, p.y) for p in peaks] == expected == [(12, 7)]


def test_extract_peaks_top_k_and_order():
    r = np.zeros((10, 10))
    r[1, 1], r[5, 5], r[8, 2] = 0.5, 0.9, 0.7
    peaks = extract_peaks(r, 0.3, 2)
    assert [(p.x, p.y, p.score) for p in peaks] == [(5, 5, 0.9), (2, 8, 0.7)]


def test_decode_planes_round_trip_and_threshold():
    dets = [plane_det((100.4, 60.7), (40, 20)), plane_det((400.0, 300.0), (120, 200), (0.0, -0.5, 0.1), "floor")]
    maps = encode_maps(Scene(CAM, dets))
    out = decode_planes(maps)
    assert len(out) == 2
    for d in dets:
        m = [o for o in out if o.category == d.category][0]
        np.testing.assert_allclose(m.box.center, d.box.center, atol=1e-6)
        np.testing.assert_allclose(m.box.size, d.box.size, atol=1e-6)
        np.testing.assert_allclose(m.plane.normal, d.plane.normal, atol=1e-9)
        assert m.plane.offset == pytest.approx(d.plane.offset, abs=1e-9)
    assert decode_planes(maps, threshold=1.1) == []


def test_decode_planes_drops_degenerate(caplog):
    maps = encode_maps(Scene(CAM, [plane_det((100, 60), (40, 20)), plane_det((400, 300), (40, 20))]))
    maps.plane_params[75, 100] = 0.0
    with caplog.at_level(logging.WARNING):
        out = decode_planes(maps)
    assert len(out) == 1 and "dropping" in caplog.text


def test_decode_lines_single_and_empty():
    line = Line2D(0.0, 161.0, 40.0, 300.0)
    maps = encode_maps(Scene(CAM, [], [LineDetection(line)]))
    out = nms_lines(decode_lines(maps), 10.0, CAM.dims)
    assert len(out) == 1 and abs(out[0].line.b - 161.0) < 0.5
    assert out[0].line.y_min == 40.0 and out[0].line.y_max == 300.0
    assert decode_lines(DetectionMaps.empty(CAM.dims)) == []


def greedy_nms_oracle(items, suppress):
    """Repeatedly take the best remaining item and delete everything it suppresses."""
    remaining = sorted(items, key=lambda d: -d.score)
    kept = []
    while remaining:
        best = remaining.pop(0)
        kept.append(best)
        remaining = [d for d in remaining if not suppress(best, d)]
    return kept


def test_nms_planes_matches_oracle():
    rng = np.random.default_rng(2)
    for _ in range(50):
        dets = []
        for _ in range(10):
            cat = rng.choice(["wall", "wall", "floor", "ceiling"])
            dets.append(plane_det(rng.uniform(20, 200, size=2), rng.uniform(10, 80, size=2),
                                  category=str(cat), score=float(rng.uniform())))
        expected = greedy_nms_oracle(dets, lambda a, b: a.box.iou(b.box) > 0.5)
        firsts = {}
        expected = [d for d in expected if d.category == "wall" or firsts.setdefault(d.category, d) is d]
        assert nms_planes(dets, 0.5) == expected


def test_nms_planes_examples():
    a = plane_det((50, 50), (20, 20), score=0.9)
    assert nms_planes([a, plane_det((50, 50), (20, 20), score=0.8)]) == [a]
    f1 = plane_det((50, 300), (100, 40), category="floor", score=0.6)
    f2 = plane_det((400, 300), (100, 40), category="floor", score=0.7)
    assert nms_planes([f1, f2]) == [f2]


def test_nms_lines_examples():
    a = LineDetection(Line2D(0.0, 100.0, 0.0, 480.0), 0.9)
    b = LineDetection(Line2D(0.0, 200.0, 0.0, 480.0), 0.8)
    c = LineDetection(Line2D(0.0, 105.0, 0.0, 480.0), 0.8)
    assert nms_lines([a, b], 10.0, CAM.dims) == [a, b]
    assert nms_lines([a, c], 10.0, CAM.dims) == [a]
    cross = LineDetection(Line2D.from_homogeneous(np.cross([100, 0, 1], [200, 480, 1]), 0, 480), 0.5)
    other = LineDetection(Line2D.from_homogeneous(np.cross([200, 0, 1], [100, 480, 1]), 0, 480), 0.6)
    assert nms_lines([cross, other], 10.0, CAM.dims) == [other]
    assert nms_lines([a, a], 10.0, CAM.dims) == [a]


def test_nms_lines_matches_oracle():
    rng = np.random.default_rng(3)

    def suppress(a, b):
        p = np.cross(a.line.homogeneous, b.line.homogeneous)
        if abs(p[2]) > 1e-12 and 0 <= p[0] / p[2] < 640 and 0 <= p[1] / p[2] < 480:
            return True
        y0, y1 = max(a.line.y_min, b.line.y_min), min(a.line.y_max, b.line.y_max)
        if y0 > y1:
            return False
        ys = np.linspace(y0, y1, 257)
        return np.max(np.abs(a.line.x_at(ys) - b.line.x_at(ys))) < 10.0

    for _ in range(50):
        lines = []
        for _ in range(8):
            y0, y1 = np.sort(rng.uniform(0, 480, size=2))
            lines.append(LineDetection(Line2D(rng.normal(0, 0.05), rng.uniform(0, 640), y0, y1),
                                       float(rng.uniform())))
        assert nms_lines(lines, 10.0, CAM.dims) == greedy_nms_oracle(lines, suppress)


def test_decode_scene_threshold_above_one():
    dets = [plane_det((100, 60), (40, 20))]
    lines = [LineDetection(Line2D(0.0, 161.0, 40.0, 300.0))]
    maps = encode_maps(Scene(CAM, dets, lines))
    scene = decode_scene(maps, CAM, 1.1, 1.1)
    assert scene.planes == [] and scene.lines == []
