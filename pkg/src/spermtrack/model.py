"""Shared domain types, unit conversions and the calibration record.

Every numeric constant used by the tracking, joining, evaluation and
motility stages lives in :class:`CalibrationConfig` so that no stage
hard-codes a gate.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Tuple

import numpy as np

SOURCE_DETECTED = "detected"
SOURCE_TRACKED = "tracked"
SOURCE_INTERPOLATED = "interpolated"
VALID_SOURCES = (SOURCE_DETECTED, SOURCE_TRACKED, SOURCE_INTERPOLATED)


@dataclass(frozen=True, eq=False)
class Frame:
    """One 8-bit grayscale image of a video with its temporal index.

    ``pixels`` is a (height, width) uint8 array; it is treated as
    read-only once the frame is constructed.
    """

    index: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"frame index must be >= 0, got {self.index}")
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise ValueError("pixels must be a non-empty 2-D array")
        if px.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {px.dtype}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates (sub-pixel capable)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def center(self) -> Tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class Detection:
    """A scored bounding box on a specific frame."""

    frame_index: int
    box: BoundingBox
    score: float

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be >= 0, got {self.frame_index}")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class TrackPoint:
    """A per-frame position of a tracked object.

    ``source`` records how the point was obtained: a matched detection,
    a propagated tracker prediction, or a gap fill.
    """

    frame_index: int
    position: Tuple[float, float]
    box: Optional[BoundingBox] = None
    source: str = SOURCE_DETECTED

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be >= 0, got {self.frame_index}")
        if self.source not in VALID_SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        x, y = self.position
        object.__setattr__(self, "position", (float(x), float(y)))


@dataclass(frozen=True)
class Track:
    """An identity-labeled sequence of per-frame positions."""

    id: int
    points: Tuple[TrackPoint, ...]

    def __post_init__(self):
        pts = tuple(self.points)
        if not pts:
            raise ValueError("a track needs at least one point")
        for a, b in zip(pts, pts[1:]):
            if b.frame_index <= a.frame_index:
                raise ValueError(
                    f"track {self.id}: frame indices must strictly increase "
                    f"({a.frame_index} -> {b.frame_index})"
                )
        object.__setattr__(self, "points", pts)

    @property
    def start_frame(self) -> int:
        return self.points[0].frame_index

    @property
    def end_frame(self) -> int:
        return self.points[-1].frame_index

    @property
    def start_position(self) -> Tuple[float, float]:
        return self.points[0].position

    @property
    def end_position(self) -> Tuple[float, float]:
        return self.points[-1].position

    def frames(self) -> Tuple[int, ...]:
        return tuple(p.frame_index for p in self.points)

    def is_gap_free(self) -> bool:
        return self.end_frame - self.start_frame + 1 == len(self.points)

    def point_at(self, frame_index: int) -> Optional[TrackPoint]:
        for p in self.points:
            if p.frame_index == frame_index:
                return p
        return None


# Field-level docs live in the spec of each consuming stage; defaults are
# the calibrated operating point for 0.833 um/px, 50 fps microscopy video.
@dataclass(frozen=True)
class CalibrationConfig:
    microns_per_pixel: float = 0.833
    fps: float = 50.0
    association_radius_px: float = 15.0
    joiner_speed_diff_px: float = 10.0
    joiner_phase1_slack_px: float = 10.0
    joiner_phase2_radius_px: float = 10.0
    joiner_phase3_slack_px: float = 5.0
    joiner_phase3_max_offset_frames: int = 5
    joiner_phase4_speed_px: float = 5.0
    joiner_phase4_window_frames: int = 5
    joiner_border_margin_px: float = 20.0
    joiner_min_track_points: int = 9
    joiner_long_track_min_points: int = 4
    eval_iou_threshold: float = 0.5
    eval_endpoint_radius_px: float = 25.0
    eval_mean_dist_px: float = 15.0
    eval_max_nonoverlap_frames: int = 5
    mot_mvv_um_s: float = 50.0
    mot_lvv_um_s: float = 30.0
    mot_str_threshold_pct: float = 70.0
    mot_immotile_um_s: float = 8.33
    mot_vap_window_frames: int = 5

    def __post_init__(self):
        positive = (
            "microns_per_pixel", "fps", "association_radius_px",
            "joiner_speed_diff_px", "joiner_phase1_slack_px",
            "joiner_phase2_radius_px", "joiner_phase3_slack_px",
            "joiner_phase3_max_offset_frames", "joiner_phase4_speed_px",
            "joiner_phase4_window_frames", "joiner_border_margin_px",
            "joiner_min_track_points", "joiner_long_track_min_points",
            "eval_iou_threshold", "eval_endpoint_radius_px",
            "eval_mean_dist_px", "mot_mvv_um_s", "mot_lvv_um_s",
            "mot_str_threshold_pct", "mot_immotile_um_s",
            "mot_vap_window_frames",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.eval_max_nonoverlap_frames < 0:
            raise ValueError("eval_max_nonoverlap_frames must be >= 0")
        if not self.mot_lvv_um_s < self.mot_mvv_um_s:
            raise ValueError("mot_lvv_um_s must be below mot_mvv_um_s")
        if not self.mot_immotile_um_s < self.mot_lvv_um_s:
            raise ValueError("mot_immotile_um_s must be below mot_lvv_um_s")

    def replace(self, **overrides) -> "CalibrationConfig":
        return dataclasses.replace(self, **overrides)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def field_names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, object]) -> "CalibrationConfig":
        """Build a config from string-keyed values, rejecting unknown keys.

        Values may be strings (as read from a key=value file); they are
        coerced to the declared field type.
        """
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            if key not in fields:
                raise KeyError(f"unknown calibration key {key!r}")
            ftype = fields[key].type
            caster = int if ftype in ("int", int) else float
            kwargs[key] = caster(value)
        return cls(**kwargs)


def euclidean_distance(a: Iterable[float], b: Iterable[float]) -> float:
    """L2 distance between two (x, y) points, in pixels."""
    ax, ay = a
    bx, by = b
    return math.hypot(ax - bx, ay - by)


def px_per_frame_to_um_per_s(v: float, cfg: CalibrationConfig) -> float:
    """Convert a per-frame pixel displacement to micrometres per second."""
    if v < 0:
        raise ValueError(f"velocity must be >= 0, got {v}")
    return v * cfg.fps * cfg.microns_per_pixel
