"""Room layout reconstruction from detected planes and vertical lines."""

from .errors import LayoutError
from .types import (BoundingBox, CameraIntrinsics, Line2D, LineDetection, Plane3D, PlaneDetection,
                    Scene, normalize_plane)
from .pipeline import ReconstructConfig, Reconstruction, reconstruct

__all__ = [
    "BoundingBox", "CameraIntrinsics", "LayoutError", "Line2D", "LineDetection", "Plane3D",
    "PlaneDetection", "ReconstructConfig", "Reconstruction", "Scene", "normalize_plane", "reconstruct",
]
__version__ = "0.1.0"
