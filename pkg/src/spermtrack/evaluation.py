"""Detection and track-level evaluation against ground truth.

Detections are matched to annotations per frame by IoU in descending
score order. Tracks are matched after equalizing frame spans: a pair
with few enough non-overlapping frames is compared point by point and
must pass the endpoint and mean-distance gates.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .model import (
    SOURCE_INTERPOLATED,
    BoundingBox,
    CalibrationConfig,
    Detection,
    Track,
    TrackPoint,
    euclidean_distance,
)


@dataclass(frozen=True)
class DetectionEvalReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    accuracy: float
    ap: float


@dataclass(frozen=True)
class TrackEvalReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    accuracy: float


@dataclass(frozen=True)
class TrackMatch:
    estimated_id: int
    ground_truth_id: int
    mean_distance_px: float
    first_point_distance_px: float
    last_point_distance_px: float
    interpolated_frames: int


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def _metric_fields(tp: int, fp: int, fn: int) -> Tuple[float, float, float, float]:
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2.0 * precision * recall, precision + recall)
    accuracy = _ratio(tp, tp + fp + fn)
    return precision, recall, f1, accuracy


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area of two boxes, in [0, 1]."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def _sorted_by_score(dets: Sequence[Detection]) -> List[Tuple[int, Detection]]:
    # ties broken by frame then original order, for determinism
    indexed = list(enumerate(dets))
    indexed.sort(key=lambda e: (-e[1].score, e[1].frame_index, e[0]))
    return indexed


def _match_flags(dets: Sequence[Detection], gts: Sequence[Detection],
                 cfg: CalibrationConfig) -> List[bool]:
    """Per-detection TP flags, in the order of ``dets``.

    Matching is per frame, greedy in descending score order: a detection
    is a true positive iff its best IoU against a still-unmatched
    annotation of the same frame reaches the threshold.
    """
    gt_by_frame: Dict[int, List[Tuple[int, Detection]]] = {}
    for i, gt in enumerate(gts):
        gt_by_frame.setdefault(gt.frame_index, []).append((i, gt))
    gt_used = [False] * len(gts)
    flags = [False] * len(dets)
    for det_idx, det in _sorted_by_score(dets):
        best_iou = 0.0
        best_gt = None
        for gt_idx, gt in gt_by_frame.get(det.frame_index, []):
            if gt_used[gt_idx]:
                continue
            ov = iou(det.box, gt.box)
            if ov > best_iou:
                best_iou = ov
                best_gt = gt_idx
        if best_gt is not None and best_iou >= cfg.eval_iou_threshold:
            flags[det_idx] = True
            gt_used[best_gt] = True
    return flags


def eval_detections(dets: Sequence[Detection], gts: Sequence[Detection],
                    cfg: CalibrationConfig,
                    score_threshold: float = 0.5) -> DetectionEvalReport:
    """Counting metrics over detections at or above the score threshold,
    plus average precision over all detections."""
    kept = [d for d in dets if d.score >= score_threshold]
    flags = _match_flags(kept, gts, cfg)
    tp = sum(flags)
    fp = len(kept) - tp
    fn = len(gts) - tp
    precision, recall, f1, accuracy = _metric_fields(tp, fp, fn)
    ap = average_precision(dets, gts, cfg)
    return DetectionEvalReport(tp=tp, fp=fp, fn=fn, precision=precision,
                               recall=recall, f1=f1, accuracy=accuracy, ap=ap)


def average_precision(dets: Sequence[Detection], gts: Sequence[Detection],
                      cfg: CalibrationConfig, literal_form: bool = False) -> float:
    """Average precision of score-ranked detections.

    The standard form accumulates precision at every true positive and
    divides by the number of annotations. ``literal_form`` instead sums
    precision(k) * recall(k) over all ranks (the product reading of the
    summed formula); the two coincide when every true positive raises
    recall by exactly one annotation's worth.
    """
    if not gts:
        return 0.0
    flags = _match_flags(dets, gts, cfg)
    order = [idx for idx, _ in _sorted_by_score(dets)]
    tp_running = 0
    total = 0.0
    for rank, det_idx in enumerate(order, start=1):
        if flags[det_idx]:
            tp_running += 1
            if not literal_form:
                total += tp_running / rank
        if literal_form:
            precision = tp_running / rank
            recall = tp_running / len(gts)
            total += precision * recall
    return total / len(gts)


def _positions_by_frame(track: Track) -> Dict[int, Tuple[float, float]]:
    return {p.frame_index: p.position for p in track.points}


def _interp_position(track: Track, frame: int) -> Tuple[float, float]:
    """Piecewise-linear position inside the track's span, linear
    extrapolation from the two boundary points outside it."""
    pts = track.points
    if frame <= pts[0].frame_index:
        pair = pts[:2] if len(pts) >= 2 else (pts[0], pts[0])
    elif frame >= pts[-1].frame_index:
        pair = pts[-2:] if len(pts) >= 2 else (pts[0], pts[0])
    else:
        pair = None
        for a, b in zip(pts, pts[1:]):
            if a.frame_index <= frame <= b.frame_index:
                pair = (a, b)
                break
    a, b = pair
    if a.frame_index == b.frame_index:
        return a.position
    t = (frame - a.frame_index) / (b.frame_index - a.frame_index)
    ax, ay = a.position
    bx, by = b.position
    return (ax + (bx - ax) * t, ay + (by - ay) * t)


def equalize_track(est: Track, gt: Track, cfg: CalibrationConfig) -> Optional[Track]:
    """Extend the estimated track onto the ground truth's frames.

    Returns None (no match possible) when the two tracks differ on too
    many frames. Frames the estimate already covers are never altered.
    """
    est_frames = set(est.frames())
    gt_frames = set(gt.frames())
    if len(est_frames ^ gt_frames) > cfg.eval_max_nonoverlap_frames:
        return None
    by_frame = _positions_by_frame(est)
    added = []
    for f in sorted(gt_frames - est_frames):
        added.append(TrackPoint(frame_index=f, position=_interp_position(est, f),
                                source=SOURCE_INTERPOLATED))
    if not added:
        return est
    merged = sorted(list(est.points) + added, key=lambda p: p.frame_index)
    return Track(id=est.id, points=tuple(merged))


@dataclass(frozen=True)
class GateCheck:
    """Distances of one equalized estimate/ground-truth comparison."""

    first_distance: float
    last_distance: float
    mean_distance: float
    endpoints_ok: bool
    mean_ok: bool
    interpolated_frames: int

    @property
    def passed(self) -> bool:
        return self.endpoints_ok and self.mean_ok


def check_gates(est: Track, gt: Track, cfg: CalibrationConfig) -> Optional[GateCheck]:
    """Equalize and compare one candidate pair; None if not equalizable."""
    equalized = equalize_track(est, gt, cfg)
    if equalized is None:
        return None
    est_pos = _positions_by_frame(equalized)
    gt_pts = gt.points
    distances = [euclidean_distance(est_pos[p.frame_index], p.position) for p in gt_pts]
    first = distances[0]
    last = distances[-1]
    mean = sum(distances) / len(distances)
    added = len(equalized.points) - len(est.points)
    return GateCheck(
        first_distance=first,
        last_distance=last,
        mean_distance=mean,
        endpoints_ok=(first <= cfg.eval_endpoint_radius_px
                      and last <= cfg.eval_endpoint_radius_px),
        mean_ok=mean <= cfg.eval_mean_dist_px,
        interpolated_frames=added,
    )


def match_tracks(est_tracks: Sequence[Track], gt_tracks: Sequence[Track],
                 cfg: CalibrationConfig) -> Tuple[List[TrackMatch], TrackEvalReport]:
    """Assign estimated tracks to ground-truth tracks.

    Estimates are processed longest first; each takes the unmatched
    ground truth with the smallest mean distance among those passing all
    gates. Unmatched estimates count as false positives, unmatched
    ground truths as false negatives.
    """
    order = sorted(est_tracks, key=lambda t: (-len(t.points), t.id))
    gt_matched = set()
    matches: List[TrackMatch] = []
    for est in order:
        best: Optional[Tuple[float, int, GateCheck]] = None
        for gt in gt_tracks:
            if gt.id in gt_matched:
                continue
            gate = check_gates(est, gt, cfg)
            if gate is None or not gate.passed:
                continue
            key = (gate.mean_distance, gt.id)
            if best is None or key < (best[0], best[1]):
                best = (gate.mean_distance, gt.id, gate)
        if best is not None:
            mean, gt_id, gate = best
            gt_matched.add(gt_id)
            matches.append(TrackMatch(
                estimated_id=est.id,
                ground_truth_id=gt_id,
                mean_distance_px=gate.mean_distance,
                first_point_distance_px=gate.first_distance,
                last_point_distance_px=gate.last_distance,
                interpolated_frames=gate.interpolated_frames,
            ))
    tp = len(matches)
    fp = len(est_tracks) - tp
    fn = len(gt_tracks) - tp
    precision, recall, f1, accuracy = _metric_fields(tp, fp, fn)
    report = TrackEvalReport(tp=tp, fp=fp, fn=fn, precision=precision,
                             recall=recall, f1=f1, accuracy=accuracy)
    return matches, report


def report_to_json(
    detection: Optional[DetectionEvalReport] = None,
    tracking: Optional[TrackEvalReport] = None,
    matches: Optional[Sequence[TrackMatch]] = None,
) -> dict:
    """Combined report document; ratios stay fractions in [0, 1]."""
    doc: dict = {}
    if detection is not None:
        doc["detection"] = asdict(detection)
    if tracking is not None:
        doc["tracking"] = asdict(tracking)
    if matches is not None:
        doc["matches"] = [asdict(m) for m in matches]
    return doc


def write_report(doc: dict, path: Union[str, Path]) -> None:
    file = Path(path)
    file.parent.mkdir(parents=True, exist_ok=True)
    file.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
