"""Seeded synthetic video generator with exact ground truth.

Objects are rendered as Gaussian blobs moving along parametric paths
(stationary, linear, sine-perturbed, or exiting and re-entering near a
border). The generator also perturbs ground-truth detections with
false negatives, false positives, jitter and explicit dropout windows to
exercise the repair stages.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .model import (
    SOURCE_DETECTED,
    BoundingBox,
    Detection,
    Frame,
    Track,
    TrackPoint,
    euclidean_distance,
)

MOTION_STATIONARY = "stationary"
MOTION_LINEAR = "linear"
MOTION_CURVILINEAR = "curvilinear"
MOTION_BORDER = "border_exit_reentry"


@dataclass(frozen=True)
class ObjectSpec:
    motion: str
    start: Tuple[float, float]
    velocity: Tuple[float, float] = (0.0, 0.0)
    sine_amplitude: float = 0.0
    sine_period: float = 8.0
    exit_frame: int = 0        # last visible frame before leaving (border motion)
    reentry_frame: int = 0     # first visible frame after returning
    reentry_offset: Tuple[float, float] = (0.0, 0.0)
    reentry_velocity: Optional[Tuple[float, float]] = None  # default: back inward

    def __post_init__(self):
        if self.motion not in (MOTION_STATIONARY, MOTION_LINEAR,
                               MOTION_CURVILINEAR, MOTION_BORDER):
            raise ValueError(f"unknown motion model {self.motion!r}")
        if self.motion == MOTION_BORDER:
            if self.reentry_frame <= self.exit_frame + 1:
                raise ValueError("re-entry must leave at least one absent frame")
            if self.reentry_frame > self.exit_frame + 5:
                raise ValueError("re-entry offset must be at most 5 frames")


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    num_frames: int = 25
    width: int = 768
    height: int = 576
    objects: Tuple[ObjectSpec, ...] = ()
    blob_sigma: float = 3.0
    blob_amplitude: float = 180.0
    background_level: float = 20.0
    noise_sigma: float = 8.0

    def __post_init__(self):
        if self.num_frames < 1 or self.width < 1 or self.height < 1:
            raise ValueError("frame count and dimensions must be positive")
        if self.blob_sigma <= 0:
            raise ValueError("blob_sigma must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class PerturbSpec:
    seed: int = 0
    fp_rate: float = 0.0       # probability of one spurious detection per frame
    fn_rate: float = 0.0       # probability of dropping each detection
    jitter_sigma: float = 0.0
    dropout_windows: Tuple[Tuple[int, int, int], ...] = ()  # (track id, start, length)

    def __post_init__(self):
        if not (0.0 <= self.fp_rate <= 1.0 and 0.0 <= self.fn_rate <= 1.0):
            raise ValueError("rates must be in [0, 1]")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")


def _object_positions(obj: ObjectSpec, num_frames: int) -> Dict[int, Tuple[float, float]]:
    """Visible per-frame centers of one object."""
    x0, y0 = obj.start
    vx, vy = obj.velocity
    positions: Dict[int, Tuple[float, float]] = {}
    if obj.motion == MOTION_STATIONARY:
        for t in range(num_frames):
            positions[t] = (x0, y0)
    elif obj.motion == MOTION_LINEAR:
        for t in range(num_frames):
            positions[t] = (x0 + vx * t, y0 + vy * t)
    elif obj.motion == MOTION_CURVILINEAR:
        speed = math.hypot(vx, vy)
        if speed == 0:
            raise ValueError("curvilinear motion needs a non-zero velocity")
        nx, ny = -vy / speed, vx / speed  # unit normal
        for t in range(num_frames):
            swing = obj.sine_amplitude * math.sin(2.0 * math.pi * t / obj.sine_period)
            positions[t] = (x0 + vx * t + nx * swing, y0 + vy * t + ny * swing)
    elif obj.motion == MOTION_BORDER:
        exit_pos = (x0 + vx * obj.exit_frame, y0 + vy * obj.exit_frame)
        for t in range(0, obj.exit_frame + 1):
            positions[t] = (x0 + vx * t, y0 + vy * t)
        rx = exit_pos[0] + obj.reentry_offset[0]
        ry = exit_pos[1] + obj.reentry_offset[1]
        rvx, rvy = obj.reentry_velocity if obj.reentry_velocity else (-vx, -vy)
        for t in range(obj.reentry_frame, num_frames):
            dt = t - obj.reentry_frame
            positions[t] = (rx + rvx * dt, ry + rvy * dt)
    return positions


def synth_video(spec: ScenarioSpec) -> Tuple[List[Frame], List[Track], List[Detection]]:
    """Render a scenario: frames, exact ground-truth tracks and boxes.

    Deterministic for a given spec (including its seed). Boxes are tight
    around the blobs at three sigma.
    """
    rng = np.random.default_rng(spec.seed)
    all_positions = [_object_positions(obj, spec.num_frames) for obj in spec.objects]
    half = 3.0 * spec.blob_sigma

    frames: List[Frame] = []
    ys = np.arange(spec.height, dtype=np.float64)[:, None]
    xs = np.arange(spec.width, dtype=np.float64)[None, :]
    reach = int(math.ceil(4.0 * spec.blob_sigma))
    for t in range(spec.num_frames):
        img = np.full((spec.height, spec.width), spec.background_level, dtype=np.float64)
        if spec.noise_sigma > 0:
            img += rng.normal(0.0, spec.noise_sigma, size=img.shape)
        for positions in all_positions:
            pos = positions.get(t)
            if pos is None:
                continue
            cx, cy = pos
            x0 = max(int(cx) - reach, 0)
            x1 = min(int(cx) + reach + 1, spec.width)
            y0 = max(int(cy) - reach, 0)
            y1 = min(int(cy) + reach + 1, spec.height)
            if x0 >= x1 or y0 >= y1:
                continue
            yy = ys[y0:y1]
            xx = xs[:, x0:x1]
            img[y0:y1, x0:x1] += spec.blob_amplitude * np.exp(
                -((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * spec.blob_sigma ** 2))
        frames.append(Frame(index=t, pixels=np.clip(img, 0, 255).astype(np.uint8)))

    tracks: List[Track] = []
    detections: List[Detection] = []
    for track_id, positions in enumerate(all_positions):
        points = []
        for t in sorted(positions):
            cx, cy = positions[t]
            box = BoundingBox(cx - half, cy - half, cx + half, cy + half)
            points.append(TrackPoint(frame_index=t, position=(cx, cy), box=box,
                                     source=SOURCE_DETECTED))
        tracks.append(Track(id=track_id, points=tuple(points)))
    for t in range(spec.num_frames):
        for track_id, positions in enumerate(all_positions):
            pos = positions.get(t)
            if pos is None:
                continue
            cx, cy = pos
            detections.append(Detection(
                frame_index=t,
                box=BoundingBox(cx - half, cy - half, cx + half, cy + half),
                score=1.0,
            ))
    return frames, tracks, detections


def perturb(gt_dets: Sequence[Detection], pspec: PerturbSpec,
            gt_tracks: Optional[Sequence[Track]] = None,
            frame_size: Tuple[int, int] = (768, 576)) -> List[Detection]:
    """Corrupt ground-truth detections deterministically.

    Dropout windows remove a specific track's detections over a frame
    range and need ``gt_tracks`` to resolve which detection belongs to
    which track (by exact center equality on the same frame).
    """
    rng = np.random.default_rng(pspec.seed)
    if pspec.dropout_windows and gt_tracks is None:
        raise ValueError("dropout windows need the ground-truth tracks")

    drop_positions: Dict[int, List[Tuple[float, float]]] = {}
    if gt_tracks is not None:
        by_id = {t.id: t for t in gt_tracks}
        for (track_id, start, length) in pspec.dropout_windows:
            track = by_id.get(track_id)
            if track is None:
                raise ValueError(f"dropout window names unknown track {track_id}")
            for p in track.points:
                if start <= p.frame_index < start + length:
                    drop_positions.setdefault(p.frame_index, []).append(p.position)

    def dropped(det: Detection) -> bool:
        center = det.box.center
        return any(euclidean_distance(center, pos) < 1e-6
                   for pos in drop_positions.get(det.frame_index, ()))

    by_frame: Dict[int, List[Detection]] = {}
    for det in gt_dets:
        by_frame.setdefault(det.frame_index, []).append(det)

    out: List[Detection] = []
    width, height = frame_size
    for frame_index in sorted(by_frame):
        for det in by_frame[frame_index]:
            if dropped(det):
                continue
            if pspec.fn_rate > 0 and rng.random() < pspec.fn_rate:
                continue
            box = det.box
            if pspec.jitter_sigma > 0:
                dx, dy = rng.normal(0.0, pspec.jitter_sigma, size=2)
                box = BoundingBox(box.x_min + dx, box.y_min + dy,
                                  box.x_max + dx, box.y_max + dy)
            out.append(Detection(frame_index=frame_index, box=box, score=det.score))
        if pspec.fp_rate > 0 and rng.random() < pspec.fp_rate:
            half = 9.0
            cx = rng.uniform(half, width - half)
            cy = rng.uniform(half, height - half)
            out.append(Detection(
                frame_index=frame_index,
                box=BoundingBox(cx - half, cy - half, cx + half, cy + half),
                score=float(rng.uniform(0.5, 1.0)),
            ))
    return out


def random_scenario(
    seed: int,
    num_objects: int,
    num_frames: int = 25,
    width: int = 768,
    height: int = 576,
    speed_range: Tuple[float, float] = (0.0, 8.0),
    min_separation_px: float = 16.0,
    include_border_exits: bool = True,
    blob_sigma: float = 3.0,
    blob_amplitude: float = 180.0,
    noise_sigma: float = 8.0,
) -> ScenarioSpec:
    """Draw a scenario whose objects keep a minimum pairwise distance on
    every frame (paths may still cross at different times)."""
    rng = np.random.default_rng(seed)
    margin = 4.0 * blob_sigma
    objects: List[ObjectSpec] = []
    trajectories: List[Dict[int, Tuple[float, float]]] = []

    def conflicts(cand: Dict[int, Tuple[float, float]]) -> bool:
        for existing in trajectories:
            for t, pos in cand.items():
                other = existing.get(t)
                if other is not None and euclidean_distance(pos, other) < min_separation_px:
                    return True
        return False

    attempts_per_object = 200
    for i in range(num_objects):
        placed = False
        for _ in range(attempts_per_object):
            speed = rng.uniform(*speed_range)
            heading = rng.uniform(0.0, 2.0 * math.pi)
            vx, vy = speed * math.cos(heading), speed * math.sin(heading)
            kind_roll = rng.random()
            if speed < 0.25:
                obj = ObjectSpec(
                    motion=MOTION_STATIONARY,
                    start=(rng.uniform(margin, width - margin),
                           rng.uniform(margin, height - margin)),
                )
            elif include_border_exits and kind_roll < 0.08:
                obj = _random_border_object(rng, num_frames, width, height, margin)
            elif kind_roll < 0.40:
                start = _fitted_start(rng, vx, vy, num_frames, width, height, margin)
                obj = ObjectSpec(
                    motion=MOTION_CURVILINEAR, start=start, velocity=(vx, vy),
                    sine_amplitude=rng.uniform(1.0, 4.0),
                    sine_period=rng.uniform(6.0, 12.0),
                )
            else:
                start = _fitted_start(rng, vx, vy, num_frames, width, height, margin)
                obj = ObjectSpec(motion=MOTION_LINEAR, start=start, velocity=(vx, vy))
            cand = _object_positions(obj, num_frames)
            if not conflicts(cand):
                objects.append(obj)
                trajectories.append(cand)
                placed = True
                break
        if not placed:
            raise ValueError(
                f"could not place object {i} with separation {min_separation_px}")
    return ScenarioSpec(seed=seed, num_frames=num_frames, width=width, height=height,
                        objects=tuple(objects), blob_sigma=blob_sigma,
                        blob_amplitude=blob_amplitude, noise_sigma=noise_sigma)


def _fitted_start(rng, vx: float, vy: float, num_frames: int,
                  width: int, height: int, margin: float) -> Tuple[float, float]:
    """Start point such that the whole linear path stays inside margins."""
    span_x = vx * (num_frames - 1)
    span_y = vy * (num_frames - 1)
    lo_x = margin + max(-span_x, 0.0)
    hi_x = width - margin - max(span_x, 0.0)
    lo_y = margin + max(-span_y, 0.0)
    hi_y = height - margin - max(span_y, 0.0)
    if lo_x >= hi_x or lo_y >= hi_y:
        # too fast to fit; walk the long diagonal instead
        return (margin, margin)
    return (rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y))


def _random_border_object(rng, num_frames: int, width: int, height: int,
                          margin: float) -> ObjectSpec:
    """An object that leaves through a border and re-enters nearby."""
    exit_frame = int(rng.integers(6, max(num_frames - 10, 7)))
    offset = int(rng.integers(2, 6))  # re-entry 2..5 frames later
    gap = offset - 1
    side = rng.integers(0, 4)
    speed = rng.uniform(2.0, 5.0)
    lateral = rng.uniform(-1.0, 1.0) * min(4.0 * gap, 12.0) / math.sqrt(2)
    edge_gap = rng.uniform(4.0, 10.0)  # endpoint distance to the border
    if side == 0:    # left edge
        velocity = (-speed, 0.0)
        exit_pos = (edge_gap, rng.uniform(margin * 2, height - margin * 2))
        reentry_offset = (0.0, lateral)
    elif side == 1:  # right edge
        velocity = (speed, 0.0)
        exit_pos = (width - 1 - edge_gap, rng.uniform(margin * 2, height - margin * 2))
        reentry_offset = (0.0, lateral)
    elif side == 2:  # top edge
        velocity = (0.0, -speed)
        exit_pos = (rng.uniform(margin * 2, width - margin * 2), edge_gap)
        reentry_offset = (lateral, 0.0)
    else:            # bottom edge
        velocity = (0.0, speed)
        exit_pos = (rng.uniform(margin * 2, width - margin * 2), height - 1 - edge_gap)
        reentry_offset = (lateral, 0.0)
    start = (exit_pos[0] - velocity[0] * exit_frame,
             exit_pos[1] - velocity[1] * exit_frame)
    return ObjectSpec(
        motion=MOTION_BORDER,
        start=start,
        velocity=velocity,
        exit_frame=exit_frame,
        reentry_frame=exit_frame + offset,
        reentry_offset=reentry_offset,
    )


def write_scenario(spec: ScenarioSpec, path: Union[str, Path]) -> None:
    file = Path(path)
    file.parent.mkdir(parents=True, exist_ok=True)
    file.write_text(json.dumps(dataclasses.asdict(spec), indent=2) + "\n",
                    encoding="utf-8")
