import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roomlayout.errors import DegenerateParameter
from roomlayout.geometry import project_point
from roomlayout.types import (BoundingBox, CameraIntrinsics, Line2D, Plane3D, angle_difference,
                              backproject_ray, normalize_plane)


def identity_camera():
    return CameraIntrinsics(1.0, 1.0, 0.0, 0.0, 10, 10)


def test_camera_rejects_bad_intrinsics():
    with pytest.raises(ValueError):
        CameraIntrinsics(0.0, 1.0, 0.0, 0.0, 10, 10)
    with pytest.raises(ValueError):
        CameraIntrinsics(1.0, 1.0, 10.0, 0.0, 10, 10)


def test_k_inverse_is_inverse():
    cam = CameraIntrinsics(510.0, 490.0, 321.5, 239.25, 640, 480)
    np.testing.assert_allclose(cam.K @ cam.K_inv, np.eye(3), atol=1e-15)


def test_normalize_plane_examples():
    p = normalize_plane([0, 0, 1 / 3])
    np.testing.assert_allclose(p.normal, [0, 0, 1])
    assert p.offset == pytest.approx(3.0)
    p = normalize_plane([1, 0, 0])
    np.testing.assert_array_equal(p.normal, [1, 0, 0])
    assert p.offset == 1.0


def test_normalize_plane_degenerate():
    with pytest.raises(DegenerateParameter):
        normalize_plane([0, 0, 1e-13])


def test_normalize_plane_round_trip_1000():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        d = rng.uniform(0.5, 10)
        p = normalize_plane(n / d)
        np.testing.assert_allclose(p.normal, n, atol=1e-9)
        assert abs(p.offset - d) <= 1e-9
        np.testing.assert_array_equal(p.param, n / d)


def test_plane_invariants():
    with pytest.raises(ValueError):
        Plane3D([1, 1, 0], 1.0)
    with pytest.raises(ValueError):
        Plane3D([1, 0, 0], 1.0, "virtual")
    with pytest.raises(ValueError):
        Plane3D([1, 0, 0], 1.0, "door")
    flipped = Plane3D([0, 1, 0], -2.0, "floor").canonical()
    assert flipped.offset == 2.0 and flipped.normal[1] == -1.0


def test_backproject_examples():
    np.testing.assert_array_equal(backproject_ray((2, 3), identity_camera()), [2, 3, 1])
    cam = CameraIntrinsics(500, 500, 320, 240, 640, 480)
    np.testing.assert_array_equal(backproject_ray((320, 240), cam), [0, 0, 1])


@settings(max_examples=200, deadline=None)
@given(fx=st.floats(50, 2000), fy=st.floats(50, 2000), cx=st.floats(0, 639), cy=st.floats(0, 479),
       x=st.floats(-100, 740), y=st.floats(-100, 580))
def test_backproject_inverts_k(fx, fy, cx, cy, x, y):
    cam = CameraIntrinsics(fx, fy, cx, cy, 640, 480)
    r = backproject_ray((x, y), cam)
    assert r[2] == 1.0
    np.testing.assert_allclose(cam.K @ r, [x, y, 1.0], rtol=0, atol=1e-12 * max(1.0, abs(x), abs(y)))


@settings(max_examples=200, deadline=None)
@given(q=st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 20)))
def test_backproject_of_projection_is_parallel(q):
    cam = CameraIntrinsics(400, 380, 300, 200, 640, 480)
    r = backproject_ray(project_point(q, cam), cam)
    assert np.linalg.norm(np.cross(r, q)) <= 1e-9 * np.linalg.norm(q) * np.linalg.norm(r)


def test_line_normal_form():
    line = Line2D(-0.5, 10.0, 0.0, 5.0)
    assert 0 <= line.theta < 2 * math.pi
    x = line.x_at(3.0)
    assert x * math.cos(line.theta) + 3.0 * math.sin(line.theta) - line.b == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        Line2D(0.0, 1.0, 5.0, 4.0)


def test_line_from_homogeneous_sign():
    a = Line2D.from_homogeneous([2.0, 0.0, -10.0])
    b = Line2D.from_homogeneous([-2.0, 0.0, 10.0])
    assert a.theta == b.theta == 0.0 and a.b == b.b == 5.0


def test_angle_difference_wraps():
    assert angle_difference(0.01, 2 * math.pi - 0.01) == pytest.approx(0.02)
    assert angle_difference(1.0, 1.0) == 0.0


def test_bounding_box():
    a = BoundingBox((5, 5), (10, 10))
    b = BoundingBox((10, 5), (10, 10))
    assert a.iou(b) == pytest.approx(50 / 150)
    assert a.intersects_image(640, 480)
    assert not BoundingBox((-20, 5), (10, 10)).intersects_image(640, 480)
    with pytest.raises(ValueError):
        BoundingBox((0, 0), (0, 1))
