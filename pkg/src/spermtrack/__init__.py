"""Tracking-by-detection and motility analysis for microscopy video."""

from .model import (
    BoundingBox,
    CalibrationConfig,
    Detection,
    Frame,
    Track,
    TrackPoint,
    euclidean_distance,
    px_per_frame_to_um_per_s,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "CalibrationConfig",
    "Detection",
    "Frame",
    "Track",
    "TrackPoint",
    "euclidean_distance",
    "px_per_frame_to_um_per_s",
    "__version__",
]
