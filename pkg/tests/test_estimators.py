import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from roomlayout.decode import encode_maps
from roomlayout.errors import DimensionMismatch
from roomlayout.estimators import DetectionDecoder, LayoutReconstructor
from roomlayout.synth import generate
from roomlayout.validation import check_depth_map, check_label_map, check_scenes


@pytest.fixture(scope="module")
def truths():
    return [generate(seed) for seed in range(3)]


def test_params_and_clone():
    est = LayoutReconstructor(alpha=0.5, band_px=None)
    params = est.get_params()
    assert params["alpha"] == 0.5 and params["band_px"] is None and params["residual"] == "endpoint"
    twin = clone(est).set_params(optimize=False)
    assert twin.optimize is False and est.optimize is True


def test_unfitted_raises(truths):
    with pytest.raises(NotFittedError):
        LayoutReconstructor().predict([truths[0].scene])
    with pytest.raises(NotFittedError):
        DetectionDecoder().transform([])


def test_fit_validates_config():
    with pytest.raises(ValueError):
        LayoutReconstructor(alpha=-1).fit()
    with pytest.raises(ValueError):
        LayoutReconstructor(residual="bogus").fit()
    with pytest.raises(ValueError):
        DetectionDecoder(line_nms_px=0).fit()


def test_predict_transform_score(truths):
    scenes = [t.scene for t in truths]
    est = LayoutReconstructor(optimize=False).fit(scenes)
    recs = est.predict(scenes)
    assert len(recs) == 3
    labels = est.transform(scenes)
    for got, t in zip(labels, truths):
        assert np.mean(got == t.labels) >= 0.999
    assert est.score(scenes, [t.labels for t in truths]) == pytest.approx(0.0, abs=0.05)
    assert len(est.predict(scenes[0])) == 1


def test_decoder_then_reconstructor(truths):
    maps = [encode_maps(t.scene) for t in truths]
    scenes = DetectionDecoder().fit_transform(maps)
    assert [len(s.planes) for s in scenes] == [len(t.scene.planes) for t in truths]
    labels = LayoutReconstructor(optimize=False).fit_transform(scenes)
    for got, t in zip(labels, truths):
        assert np.mean(got == t.labels) >= 0.99


def test_validation_helpers(truths):
    with pytest.raises(TypeError):
        check_scenes(["not a scene"])
    assert check_label_map(np.ones((2, 3), dtype=float)).dtype == np.uint8
    with pytest.raises(ValueError):
        check_label_map(np.full((2, 2), 0.5))
    with pytest.raises(ValueError):
        check_label_map(np.full((2, 2), 300))
    with pytest.raises(DimensionMismatch):
        check_label_map(np.zeros((2, 2)), (3, 3))
    with pytest.raises(ValueError):
        check_depth_map(np.full((2, 2), np.nan))
    with pytest.raises(ValueError):
        check_depth_map(np.zeros(4))
