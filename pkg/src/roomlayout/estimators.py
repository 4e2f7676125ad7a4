"""scikit-learn style wrappers around decoding and reconstruction."""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .decode import DetectionMaps, decode_scene
from .errors import EmptyBoundary
from .metrics import edge_error
from .optimize import ENDPOINT, RefineConfig
from .pipeline import ReconstructConfig, reconstruct
from .validation import check_label_map, check_scenes


class DetectionDecoder(TransformerMixin, BaseEstimator):
    """Turn detection rasters into scenes (peaks, regression lookups, NMS)."""

    def __init__(self, plane_threshold: float = 0.3, line_threshold: float = 0.3, plane_top_k: int = 10,
                 line_top_k: int = 20, plane_iou: float = 0.5, line_nms_px: float = 10.0):
        self.plane_threshold = plane_threshold
        self.line_threshold = line_threshold
        self.plane_top_k = plane_top_k
        self.line_top_k = line_top_k
        self.plane_iou = plane_iou
        self.line_nms_px = line_nms_px

    def fit(self, X=None, y=None):
        if self.plane_top_k < 0 or self.line_top_k < 0:
            raise ValueError("top_k values must be non-negative")
        if not self.line_nms_px > 0:
            raise ValueError("line_nms_px must be positive")
        self.fitted_ = True
        return self

    def transform(self, X) -> list:
        check_is_fitted(self)
        maps = [X] if isinstance(X, DetectionMaps) else list(X)
        return [decode_scene(m, m.camera, self.plane_threshold, self.line_threshold, self.plane_top_k,
                             self.line_top_k, self.plane_iou, self.line_nms_px) for m in maps]


class LayoutReconstructor(BaseEstimator):
    """Geometric reasoning (plus optional refinement) from scenes to layouts.

    ``fit`` only validates the hyper-parameters; nothing is learned.
    ``predict`` returns :class:`~roomlayout.pipeline.Reconstruction` objects,
    ``transform`` their label maps and ``score`` the negative mean edge error.
    """

    def __init__(self, optimize: bool = True, alpha: float = 1.0, beta: float = 0.01,
                 max_iterations: int = 200, gradient_tolerance: float = 1e-8, residual: str = ENDPOINT,
                 line_nms_px: float = 10.0, score_threshold: float = 0.3,
                 band_px: Optional[float] = 40.0, gate_px: Optional[float] = None):
        self.optimize = optimize
        self.alpha = alpha
        self.beta = beta
        self.max_iterations = max_iterations
        self.gradient_tolerance = gradient_tolerance
        self.residual = residual
        self.line_nms_px = line_nms_px
        self.score_threshold = score_threshold
        self.band_px = band_px
        self.gate_px = gate_px

    def fit(self, X=None, y=None):
        refine = RefineConfig(alpha=self.alpha, beta=self.beta, max_iterations=self.max_iterations,
                              gradient_tolerance=self.gradient_tolerance, residual=self.residual)
        self.config_ = ReconstructConfig(optimize=self.optimize, refine=refine, line_nms_px=self.line_nms_px,
                                         score_threshold=self.score_threshold, gate_px=self.gate_px,
                                         band_px=self.band_px)
        return self

    def predict(self, X) -> list:
        check_is_fitted(self)
        return [reconstruct(s, self.config_) for s in check_scenes(X)]

    def transform(self, X) -> list:
        return [r.labels for r in self.predict(X)]

    def fit_transform(self, X, y=None) -> list:
        return self.fit(X, y).transform(X)

    def score(self, X, y) -> float:
        """Negative mean edge error against ground-truth label maps ``y``."""
        errors = []
        for pred, gt in zip(self.transform(X), y):
            gt = check_label_map(gt, pred.shape)
            try:
                errors.append(edge_error(pred, gt))
            except EmptyBoundary:
                errors.append(np.inf)
        return -float(np.mean(errors))
