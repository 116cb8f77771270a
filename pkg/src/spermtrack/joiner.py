"""Track repair: joining fragments that belong to one physical object.

Four phases run once each, in order, over started tracks in ascending
start-frame order:

1. fragment joining across adjacent frames (a track ends, another starts
   on the very next frame),
2. false-positive split repair (one ends and one starts on the same
   frame; the poisoned last point of the earlier track is dropped),
3. multi-frame gap joining (starts two to five frames later; thresholds
   scale with the number of unobserved frames, which are filled by
   linear interpolation),
4. border exit/re-entry joining near the frame edges.

A final pruning pass removes tracks that stayed too short.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .model import (
    SOURCE_INTERPOLATED,
    CalibrationConfig,
    Track,
    TrackPoint,
    euclidean_distance,
)


@dataclass(frozen=True)
class JoinDecision:
    earlier_track: int
    later_track: int
    phase: int
    gap_frames: int
    distance_px: float
    threshold_px: float

    def __post_init__(self):
        if self.distance_px > self.threshold_px:
            raise ValueError("join distance exceeds its admitting threshold")
        if self.gap_frames < 0:
            raise ValueError("gap_frames must be >= 0")


def _step_lengths(track: Track) -> List[float]:
    """Per-frame step lengths between consecutive points."""
    steps = []
    for a, b in zip(track.points, track.points[1:]):
        steps.append(euclidean_distance(a.position, b.position) / (b.frame_index - a.frame_index))
    return steps


def _avg_step(track: Track) -> float:
    steps = _step_lengths(track)
    return sum(steps) / len(steps) if steps else 0.0


def _max_step(track: Track) -> float:
    steps = _step_lengths(track)
    return max(steps) if steps else 0.0


def _is_long(track: Track, cfg: CalibrationConfig) -> bool:
    return len(track.points) >= cfg.joiner_long_track_min_points


def _interpolated_fill(a_last: TrackPoint, b_first: TrackPoint) -> List[TrackPoint]:
    """Linear position fill on the unobserved frames strictly between two points."""
    filled = []
    span = b_first.frame_index - a_last.frame_index
    ax, ay = a_last.position
    bx, by = b_first.position
    for f in range(a_last.frame_index + 1, b_first.frame_index):
        t = (f - a_last.frame_index) / span
        filled.append(TrackPoint(
            frame_index=f,
            position=(ax + (bx - ax) * t, ay + (by - ay) * t),
            source=SOURCE_INTERPOLATED,
        ))
    return filled


def _merge(a: Track, b: Track, drop_a_last: bool = False, fill_gap: bool = False) -> Track:
    """Append b's points to a, keeping a's id."""
    a_points = list(a.points[:-1] if drop_a_last else a.points)
    if fill_gap and a_points:
        a_points.extend(_interpolated_fill(a_points[-1], b.points[0]))
    return Track(id=a.id, points=tuple(a_points + list(b.points)))


def _phase_threshold(a: Track, b: Track, d: float, offset: int,
                     phase: int, cfg: CalibrationConfig) -> Optional[float]:
    """Admission threshold for joining (a, b) in phase 1 or 3, or None.

    ``None`` means the pair is not admissible (threshold failed or, for
    two long tracks, the average-speed gate failed).
    """
    long_a, long_b = _is_long(a, cfg), _is_long(b, cfg)
    gap = offset - 1
    scale = 1 if phase == 1 else gap
    slack = cfg.joiner_phase1_slack_px if phase == 1 else cfg.joiner_phase3_slack_px
    if long_a and long_b:
        if abs(_avg_step(a) - _avg_step(b)) >= cfg.joiner_speed_diff_px:
            return None
        threshold = (max(_max_step(a), _max_step(b)) + slack) * scale
    elif long_a or long_b:
        threshold = (max(_max_step(a), _max_step(b)) + slack) * scale
    else:
        threshold = 2.0 * cfg.joiner_phase4_speed_px * scale
    return threshold if d <= threshold else None


def _near_border(position: Tuple[float, float], frame_size: Tuple[int, int],
                 margin: float) -> bool:
    x, y = position
    width, height = frame_size
    return (x <= margin or y <= margin
            or x >= width - 1 - margin or y >= height - 1 - margin)


class _Joiner:
    """One pass of one phase over a mutable pool of tracks."""

    def __init__(self, tracks: Sequence[Track], cfg: CalibrationConfig,
                 frame_size: Optional[Tuple[int, int]]):
        self.cfg = cfg
        self.frame_size = frame_size
        self.pool: Dict[int, Track] = {t.id: t for t in tracks}
        self.decisions: List[JoinDecision] = []

    def tracks(self) -> List[Track]:
        return sorted(self.pool.values(), key=lambda t: t.id)

    def _started_groups(self) -> List[Tuple[int, List[Track]]]:
        groups: Dict[int, List[Track]] = {}
        for t in self.pool.values():
            groups.setdefault(t.start_frame, []).append(t)
        return sorted(groups.items())

    def _candidates(self, group: List[Track], offsets: Sequence[int], phase: int):
        """Admissible (distance, earlier, later, offset, threshold) tuples.

        Earlier tracks are matched by their current end frame, so a track
        merged earlier in the same pass can be extended again.
        """
        start = group[0].start_frame
        out = []
        for offset in offsets:
            end_frame = start - offset
            if end_frame < 0:
                continue
            enders = [t for t in self.pool.values() if t.end_frame == end_frame]
            for b in group:
                if b.id not in self.pool:
                    continue
                for a in enders:
                    if a.id == b.id or a.id not in self.pool:
                        continue
                    d = euclidean_distance(a.end_position, b.start_position)
                    threshold = self._admit(a, b, d, offset, phase)
                    if threshold is not None:
                        out.append((d, offset, a.id, b.id, threshold))
        return out

    def _admit(self, a: Track, b: Track, d: float, offset: int, phase: int) -> Optional[float]:
        cfg = self.cfg
        if phase in (1, 3):
            return _phase_threshold(a, b, d, offset, phase, cfg)
        if phase == 2:
            return cfg.joiner_phase2_radius_px if d <= cfg.joiner_phase2_radius_px else None
        if phase == 4:
            if self.frame_size is None:
                return None
            margin = cfg.joiner_border_margin_px
            if not (_near_border(a.end_position, self.frame_size, margin)
                    and _near_border(b.start_position, self.frame_size, margin)):
                return None
            gap = offset - 1
            if gap < 1:  # adjacent-frame pairs are phase-1 territory
                return None
            threshold = cfg.joiner_phase4_speed_px * gap
            return threshold if d <= threshold else None
        raise ValueError(f"unknown phase {phase}")

    def run_phase(self, phase: int, offsets: Sequence[int]) -> None:
        for _, group in self._started_groups():
            # offsets are examined in ascending order: an earlier track
            # abandoned closer in time wins over a more distant one
            for offset in offsets:
                candidates = self._candidates(group, [offset], phase)
                candidates.sort(key=lambda c: (c[0], c[2], c[3]))
                used_a, used_b = set(), set()
                for d, off, a_id, b_id, threshold in candidates:
                    if a_id in used_a or b_id in used_b:
                        continue
                    if a_id not in self.pool or b_id not in self.pool:
                        continue
                    self._join(phase, a_id, b_id, off, d, threshold)
                    used_a.add(a_id)
                    used_b.add(b_id)

    def _join(self, phase: int, a_id: int, b_id: int, offset: int,
              d: float, threshold: float) -> None:
        a, b = self.pool[a_id], self.pool[b_id]
        if phase == 2:
            if len(a.points) == 1:
                # the earlier track was a lone false detection; drop it
                del self.pool[a_id]
                self.decisions.append(JoinDecision(
                    earlier_track=a_id, later_track=b_id, phase=phase,
                    gap_frames=0, distance_px=d, threshold_px=threshold))
                return
            merged = _merge(a, b, drop_a_last=True)
        else:
            merged = _merge(a, b, fill_gap=(phase in (3, 4)))
        del self.pool[b_id]
        self.pool[a_id] = merged
        self.decisions.append(JoinDecision(
            earlier_track=a_id, later_track=b_id, phase=phase,
            gap_frames=max(offset - 1, 0), distance_px=d, threshold_px=threshold))


def phase1_join(tracks: Sequence[Track], cfg: CalibrationConfig) -> List[Track]:
    j = _Joiner(tracks, cfg, None)
    j.run_phase(1, [1])
    return j.tracks()


def phase2_fp_fix(tracks: Sequence[Track], cfg: CalibrationConfig) -> List[Track]:
    j = _Joiner(tracks, cfg, None)
    j.run_phase(2, [0])
    return j.tracks()


def phase3_gap_join(tracks: Sequence[Track], cfg: CalibrationConfig) -> List[Track]:
    j = _Joiner(tracks, cfg, None)
    j.run_phase(3, list(range(2, cfg.joiner_phase3_max_offset_frames + 1)))
    return j.tracks()


def phase4_border_join(tracks: Sequence[Track], cfg: CalibrationConfig,
                       frame_size: Tuple[int, int]) -> List[Track]:
    j = _Joiner(tracks, cfg, frame_size)
    j.run_phase(4, list(range(1, cfg.joiner_phase4_window_frames + 1)))
    return j.tracks()


def prune_short(tracks: Sequence[Track], cfg: CalibrationConfig) -> List[Track]:
    """Drop tracks with fewer points than the minimum track length."""
    return [t for t in tracks if len(t.points) >= cfg.joiner_min_track_points]


def join_all(
    tracks: Sequence[Track],
    cfg: CalibrationConfig,
    frame_size: Optional[Tuple[int, int]] = None,
) -> Tuple[List[Track], List[JoinDecision]]:
    """Run all four phases once, in order, then prune short tracks.

    ``frame_size`` (width, height) enables the border phase; without it
    phase 4 is skipped.
    """
    j = _Joiner(tracks, cfg, frame_size)
    j.run_phase(1, [1])
    j.run_phase(2, [0])
    j.run_phase(3, list(range(2, cfg.joiner_phase3_max_offset_frames + 1)))
    if frame_size is not None:
        j.run_phase(4, list(range(1, cfg.joiner_phase4_window_frames + 1)))
    joined = prune_short(j.tracks(), cfg)
    return joined, j.decisions


def write_decisions(decisions: Sequence[JoinDecision], path: Union[str, Path]) -> None:
    file = Path(path)
    file.parent.mkdir(parents=True, exist_ok=True)
    file.write_text(json.dumps([asdict(d) for d in decisions], indent=2) + "\n",
                    encoding="utf-8")
