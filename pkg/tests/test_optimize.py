import math

import numpy as np
import pytest
from scipy.optimize import minimize, rosen, rosen_der

from roomlayout.decode import nms_lines
from roomlayout.geometry import plane_pair_image_line
from roomlayout.optimize import (ENDPOINT, LITERAL, NORMALIZED, RefineConfig, Triplet, lbfgs_minimize, objective,
                                 objective_gradient, planes_to_params, projected_line_error, refine_planes)
from roomlayout.pipeline import ReconstructConfig, reason
from roomlayout.synth import NoiseSpec, generate, perturb_scene
from roomlayout.types import CameraIntrinsics, Line2D, normalize_plane

CAM = CameraIntrinsics(500, 480, 320, 240, 640, 480)


def transcribed_objective(params, triplets, initial, K, alpha, beta, residual):
    """Plain-loop evaluation of the alignment cost, one term at a time."""
    K_inv = np.linalg.inv(K)
    total = 0.0
    for tr in triplets:
        ni, di = params[tr.i][:3], params[tr.i][3]
        nk, dk = params[tr.k][:3], params[tr.k][3]
        pred = (ni / di - nk / dk) @ K_inv
        if residual == LITERAL:
            total += math.sqrt(sum((pred[c] - tr.t[c]) ** 2 for c in range(3)))
        else:
            pred = pred / math.sqrt(pred[0] ** 2 + pred[1] ** 2)
        if residual == NORMALIZED:
            total += math.sqrt(sum((pred[c] - tr.t[c]) ** 2 for c in range(3)))
        if residual == ENDPOINT:
            dists = [pred[0] * x + pred[1] * y + pred[2] for x, y, _ in tr.ends]
            total += math.sqrt(dists[0] ** 2 + dists[1] ** 2)
        for p in (tr.i, tr.k):
            total += alpha * math.sqrt(sum((params[p][c] - initial[p][c]) ** 2 for c in range(3)))
            total += beta * abs(params[p][3] - initial[p][3])
    return total


def random_instance(rng, n_planes=4, n_triplets=3):
    planes = [normalize_plane(rng.normal(size=3) * [1, 0.2, 1] + [0, 0, -1]) for _ in range(n_planes)]
    initial = planes_to_params(planes)
    params = initial + rng.normal(scale=0.1, size=initial.shape)
    triplets = []
    for j in range(n_triplets):
        i, k = rng.choice(n_planes, size=2, replace=False)
        theta = rng.uniform(0, 2 * math.pi)
        triplets.append(Triplet.from_line(int(i), int(k), j, Line2D(theta, rng.uniform(-300, 300), *np.sort(rng.uniform(0, 480, 2)))))
    return params, triplets, initial


@pytest.mark.parametrize("residual", [LITERAL, NORMALIZED, ENDPOINT])
def test_objective_matches_transcription(residual):
    rng = np.random.default_rng(7)
    for _ in range(100):
        params, triplets, initial = random_instance(rng)
        cfg = RefineConfig(residual=residual)
        got = objective(params, triplets, initial, CAM, cfg)
        want = transcribed_objective(params, triplets, initial, CAM.K, cfg.alpha, cfg.beta, residual)
        assert abs(got - want) <= 1e-12 * max(1.0, abs(want))


@pytest.mark.parametrize("residual", [LITERAL, NORMALIZED, ENDPOINT])
def test_gradient_matches_central_differences(residual):
    rng = np.random.default_rng(8)
    cfg = RefineConfig(residual=residual)
    h = 1e-6
    for _ in range(100):
        params, triplets, initial = random_instance(rng)
        g = objective_gradient(params, triplets, initial, CAM, cfg)
        fd = np.zeros_like(params)
        for idx in np.ndindex(params.shape):
            up, dn = params.copy(), params.copy()
            up[idx] += h
            dn[idx] -= h
            fd[idx] = (objective(up, triplets, initial, CAM, cfg) - objective(dn, triplets, initial, CAM, cfg)) / (2 * h)
        rel = np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12)
        assert rel <= 1e-5


def test_untouched_planes_have_zero_gradient_and_no_effect():
    rng = np.random.default_rng(9)
    params, triplets, initial = random_instance(rng, n_planes=3, n_triplets=1)
    used = {triplets[0].i, triplets[0].k}
    free = ({0, 1, 2} - used).pop()
    g = objective_gradient(params, triplets, initial, CAM)
    assert not g[free].any()
    moved = params.copy()
    moved[free] += 0.3
    assert objective(moved, triplets, initial, CAM) == objective(params, triplets, initial, CAM)
    extra = np.vstack([params, [0, 0, -1, 2]])
    assert objective(extra, triplets, np.vstack([initial, [0, 0, -1, 2]]), CAM) == \
        objective(params, triplets, initial, CAM)


def _exact_pair():
    a = normalize_plane([0.3, 0.0, -0.2])
    b = normalize_plane([-0.25, 0.01, -0.3])
    return [a, b], [Triplet.from_line(0, 1, 0, plane_pair_image_line(a, b, CAM))]


def test_zero_at_exact_solution():
    planes, triplets = _exact_pair()
    params = planes_to_params(planes)
    assert objective(params, triplets, params, CAM) < 1e-12
    assert np.max(np.abs(objective_gradient(params, triplets, params, CAM))) < 1e-9


def test_refine_exact_input_is_unchanged():
    planes, triplets = _exact_pair()
    refined, report = refine_planes(planes, triplets, CAM)
    for p, q in zip(planes, refined):
        np.testing.assert_allclose(p.normal, q.normal, atol=1e-9)
        assert p.offset == pytest.approx(q.offset, abs=1e-9)
    assert report.final_objective <= report.initial_objective


def test_refine_without_triplets_is_noop():
    planes, _ = _exact_pair()
    refined, report = refine_planes(planes, [], CAM)
    assert refined == planes and report.reason == "no_triplets" and report.iterations == 0


def test_lbfgs_agrees_with_scipy_on_rosenbrock():
    for x0 in ([-1.2, 1.0], [2.0, -1.5, 0.5, 1.0]):
        ours = lbfgs_minimize(lambda x: (rosen(x), rosen_der(x)), x0, max_iterations=2000, gtol=1e-10)
        ref = minimize(rosen, x0, jac=rosen_der, method="L-BFGS-B", options={"gtol": 1e-10, "ftol": 0})
        np.testing.assert_allclose(ours.x, ref.x, atol=1e-6)
        assert ours.fun <= 1e-12 and not ours.line_search_failed


def test_lbfgs_never_increases_objective():
    seen = []

    def fun(x):
        f, g = rosen(x), rosen_der(x)
        return f, g

    res = lbfgs_minimize(fun, [-1.2, 1.0], max_iterations=1)
    assert res.fun <= rosen([-1.2, 1.0])
    values = [rosen([-1.2, 1.0])]
    for n in range(1, 40):
        values.append(lbfgs_minimize(fun, [-1.2, 1.0], max_iterations=n).fun)
    assert all(b <= a for a, b in zip(values, values[1:]))


def _perturbed(seed, **cfg):
    gt = generate(seed)
    scene = perturb_scene(gt.scene, NoiseSpec(normal_sigma=math.radians(2), offset_sigma=0.05), seed=seed)
    layout = reason(scene, ReconstructConfig(refine=RefineConfig(**cfg)))
    lines = nms_lines([l for l in scene.lines if l.score >= 0.3], 10.0, scene.camera.dims)
    return scene, layout, lines


def _line_success(seeds, **cfg):
    ok = total = 0
    for seed in seeds:
        scene, layout, lines = _perturbed(seed, **cfg)
        assert layout.report.final_objective <= layout.report.initial_objective
        for v in layout.verdicts:
            if v.connected and v.matched_detection is not None:
                i, k = v.pair
                db, dt = projected_line_error(layout.walls[i], layout.walls[k],
                                              lines[v.matched_detection].line, scene.camera)
                total += 1
                ok += db <= 1.0 and dt <= 0.01
    return ok / total


def test_refined_lines_meet_detections():
    assert _line_success(range(100)) >= 0.95


def test_refinement_reduces_line_error():
    before = after = 0.0
    for seed in range(20):
        scene, layout, lines = _perturbed(seed)
        for v in layout.verdicts:
            if v.connected and v.matched_detection is not None:
                i, k = v.pair
                line = lines[v.matched_detection].line
                before += sum(projected_line_error(layout.initial_walls[i], layout.initial_walls[k], line,
                                                   scene.camera))
                after += sum(projected_line_error(layout.walls[i], layout.walls[k], line, scene.camera))
    assert after < 0.1 * before


def test_regularizer_dominance():
    scene, layout, _ = _perturbed(4, alpha=1e6, beta=1e6)
    for a, b in zip(layout.initial_walls, layout.walls):
        np.testing.assert_allclose(a.normal, b.normal, atol=1e-3)
        assert a.offset == pytest.approx(b.offset, abs=1e-3)


def test_refinement_is_deterministic():
    _, a, _ = _perturbed(5)
    _, b, _ = _perturbed(5)
    assert planes_to_params(a.walls).tobytes() == planes_to_params(b.walls).tobytes()
    assert a.report.to_dict() == b.report.to_dict()


def test_config_validation():
    with pytest.raises(ValueError):
        RefineConfig(alpha=-1)
    with pytest.raises(ValueError):
        RefineConfig(gradient_tolerance=0)
    with pytest.raises(ValueError):
        RefineConfig(residual="other")
