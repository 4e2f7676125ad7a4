"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import DimensionMismatch
from .types import CameraIntrinsics, Scene


def check_camera(camera) -> CameraIntrinsics:
    if not isinstance(camera, CameraIntrinsics):
        raise TypeError(f"expected CameraIntrinsics, got {type(camera).__name__}")
    return camera


def check_scene(scene) -> Scene:
    if not isinstance(scene, Scene):
        raise TypeError(f"expected Scene, got {type(scene).__name__}")
    check_camera(scene.camera)
    return scene


def check_scenes(scenes) -> list[Scene]:
    """Accept one scene or an iterable of scenes; always return a list."""
    if isinstance(scenes, Scene):
        return [scenes]
    return [check_scene(s) for s in scenes]


def _check_dims(arr: np.ndarray, dims: Optional[tuple], what: str) -> None:
    if arr.ndim != 2:
        raise ValueError(f"{what} must be 2D, got shape {arr.shape}")
    if dims is not None and arr.shape != tuple(dims):
        raise DimensionMismatch(f"{what} has shape {arr.shape}, expected {tuple(dims)}")


def check_label_map(labels, dims: Optional[tuple] = None) -> np.ndarray:
    arr = np.asarray(labels)
    _check_dims(arr, dims, "label map")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise ValueError("label map must hold integers")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ValueError("labels must lie in [0, 255]")
    return arr.astype(np.uint8, copy=False)


def check_depth_map(depth, dims: Optional[tuple] = None) -> np.ndarray:
    arr = np.asarray(depth, dtype=float)
    _check_dims(arr, dims, "depth map")
    if np.any(np.isnan(arr)):
        raise ValueError("depth map contains NaN; use -1 for invalid pixels")
    return arr
