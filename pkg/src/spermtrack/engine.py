"""Multi-object tracking loop over per-frame detections.

Each live track is propagated one frame by the single-object tracker,
propagated positions are associated to detections under a distance gate,
unmatched tracks are closed and unmatched detections spawn new tracks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from .model import (
    SOURCE_DETECTED,
    CalibrationConfig,
    Detection,
    Frame,
    Track,
    TrackPoint,
    euclidean_distance,
)
from . import sot

TRACKS_HEADER = ["track_id", "frame", "x", "y", "source"]

TrackerInit = Callable[..., object]
TrackerUpdate = Callable[..., tuple]


@dataclass
class ActiveTrack:
    id: int
    points: List[TrackPoint]
    tracker: object
    alive: bool = True

    def to_track(self) -> Track:
        return Track(id=self.id, points=tuple(self.points))


@dataclass(frozen=True)
class AssociationResult:
    pairs: Tuple[Tuple[int, int], ...]       # (track id, detection index)
    rejected_tracks: Tuple[int, ...]
    new_detections: Tuple[int, ...]


def associate(
    tracked: Sequence[Tuple[int, Tuple[float, float]]],
    detections: Sequence[Tuple[int, Tuple[float, float]]],
    radius: float,
) -> AssociationResult:
    """Greedy distance-sorted matching under an inclusive gate.

    Candidate pairs within ``radius`` are taken in ascending distance
    order (ties: lower track id, then lower detection index); a pair is
    accepted only while both sides are unmatched. This is the fixed point
    of the assign/reassign/reject procedure: the loser of any conflict is
    automatically retried on its next-nearest detection.
    """
    if radius <= 0:
        raise ValueError("radius must be strictly positive")
    candidates = []
    for tid, tpos in tracked:
        for didx, dpos in detections:
            d = euclidean_distance(tpos, dpos)
            if d <= radius:
                candidates.append((d, tid, didx))
    candidates.sort()
    matched_tracks: Dict[int, int] = {}
    matched_dets = set()
    for d, tid, didx in candidates:
        if tid in matched_tracks or didx in matched_dets:
            continue
        matched_tracks[tid] = didx
        matched_dets.add(didx)
    pairs = tuple(sorted(matched_tracks.items()))
    rejected = tuple(tid for tid, _ in tracked if tid not in matched_tracks)
    new = tuple(didx for didx, _ in detections if didx not in matched_dets)
    return AssociationResult(pairs=pairs, rejected_tracks=rejected, new_detections=new)


@dataclass
class EngineState:
    """Mutable state of one tracking run."""

    cfg: CalibrationConfig
    tracker_init: TrackerInit = sot.sot_init
    tracker_update: TrackerUpdate = sot.sot_update
    tracker_params: object = None
    active: List[ActiveTrack] = field(default_factory=list)
    finished: List[ActiveTrack] = field(default_factory=list)
    next_id: int = 0
    last_frame_index: Optional[int] = None

    def _spawn(self, frame: Frame, detection: Detection) -> None:
        tracker = self._init_tracker(frame, detection)
        point = TrackPoint(
            frame_index=frame.index,
            position=detection.box.center,
            box=detection.box,
            source=SOURCE_DETECTED,
        )
        self.active.append(ActiveTrack(id=self.next_id, points=[point], tracker=tracker))
        self.next_id += 1

    def _init_tracker(self, frame: Frame, detection: Detection):
        if self.tracker_params is not None:
            return self.tracker_init(frame, detection.box, self.tracker_params)
        return self.tracker_init(frame, detection.box)

    def tracks(self) -> List[Track]:
        done = [at.to_track() for at in self.finished + self.active]
        done.sort(key=lambda t: t.id)
        return done


def step(state: EngineState, frame: Frame, detections: Sequence[Detection]) -> None:
    """Process one frame: propagate, associate, close, spawn."""
    if state.last_frame_index is not None and frame.index != state.last_frame_index + 1:
        raise ValueError(
            f"frame-index discontinuity: got {frame.index} "
            f"after {state.last_frame_index}"
        )

    if state.last_frame_index is None:
        for det in detections:
            state._spawn(frame, det)
        state.last_frame_index = frame.index
        return

    # propagate every live track one frame
    propagated: List[Tuple[int, Tuple[float, float]]] = []
    by_id = {at.id: at for at in state.active}
    for at in state.active:
        _, box = state.tracker_update(at.tracker, frame)
        propagated.append((at.id, box.center))

    det_positions = [(i, det.box.center) for i, det in enumerate(detections)]
    result = associate(propagated, det_positions, state.cfg.association_radius_px)

    for tid, didx in result.pairs:
        at = by_id[tid]
        det = detections[didx]
        at.points.append(TrackPoint(
            frame_index=frame.index,
            position=det.box.center,
            box=det.box,
            source=SOURCE_DETECTED,
        ))
        # the detection is trusted over the filter
        at.tracker = state._init_tracker(frame, det)

    for tid in result.rejected_tracks:
        at = by_id[tid]
        at.alive = False  # propagated point is discarded
        state.finished.append(at)
    state.active = [at for at in state.active if at.alive]

    for didx in result.new_detections:
        state._spawn(frame, detections[didx])

    state.last_frame_index = frame.index


def run(
    frames: Sequence[Frame],
    detections_per_frame: Dict[int, Sequence[Detection]],
    cfg: CalibrationConfig,
    tracker_init: TrackerInit = sot.sot_init,
    tracker_update: TrackerUpdate = sot.sot_update,
    tracker_params: object = None,
) -> List[Track]:
    """Track all objects through a frame sequence.

    Returns every spawned track, open or closed, ordered by id. Track
    joining and pruning are applied downstream.
    """
    for fi in detections_per_frame:
        if not 0 <= fi < len(frames):
            raise ValueError(f"detections reference frame {fi} outside the video")
    state = EngineState(
        cfg=cfg,
        tracker_init=tracker_init,
        tracker_update=tracker_update,
        tracker_params=tracker_params,
    )
    for frame in frames:
        step(state, frame, list(detections_per_frame.get(frame.index, [])))
    return state.tracks()


def write_tracks(tracks: Sequence[Track], path: Union[str, Path]) -> None:
    """Write tracks as CSV rows of ``track_id,frame,x,y,source``."""
    file = Path(path)
    file.parent.mkdir(parents=True, exist_ok=True)
    with file.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACKS_HEADER)
        for track in sorted(tracks, key=lambda t: t.id):
            for p in track.points:
                writer.writerow([track.id, p.frame_index,
                                 repr(p.position[0]), repr(p.position[1]), p.source])


def read_tracks(path: Union[str, Path]) -> List[Track]:
    """Read tracks written by :func:`write_tracks`."""
    file = Path(path)
    if not file.is_file():
        raise FileNotFoundError(f"{file}: not found")
    points: Dict[int, List[TrackPoint]] = {}
    with file.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{file}: empty file, expected header "
                             f"{','.join(TRACKS_HEADER)}") from None
        if [h.strip() for h in header] != TRACKS_HEADER:
            raise ValueError(f"{file}: line 1: bad header {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ValueError(f"{file}: line {lineno}: expected 5 fields, got {len(row)}")
            try:
                tid = int(row[0])
                frame = int(row[1])
                x, y = float(row[2]), float(row[3])
                point = TrackPoint(frame_index=frame, position=(x, y), source=row[4])
            except ValueError as exc:
                raise ValueError(f"{file}: line {lineno}: {exc}") from None
            points.setdefault(tid, []).append(point)
    tracks = []
    for tid in sorted(points):
        pts = sorted(points[tid], key=lambda p: p.frame_index)
        tracks.append(Track(id=tid, points=tuple(pts)))
    return tracks
