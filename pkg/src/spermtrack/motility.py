"""CASA kinematic parameters and the six-way motility classification.

Velocities are reported in micrometres per second: straight-line (first
to last point), curvilinear (raw path length) and average-path (path
length of the moving-average smoothed trajectory, endpoints anchored).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

from .model import CalibrationConfig, Track, euclidean_distance

CATEGORY_IMMOTILE = "immotile"
CATEGORY_SLOW = "slow"
CATEGORY_MEDIUM = "medium"
CATEGORY_RAPID = "rapid"
CATEGORY_PROGRESSIVE = "progressive"
CATEGORY_NON_PROGRESSIVE = "non_progressive"

SPEED_CLASSES = (CATEGORY_IMMOTILE, CATEGORY_SLOW, CATEGORY_MEDIUM, CATEGORY_RAPID)
PROGRESS_CLASSES = (CATEGORY_IMMOTILE, CATEGORY_PROGRESSIVE, CATEGORY_NON_PROGRESSIVE)

MOTILITY_HEADER = ["track_id", "vsl_um_s", "vcl_um_s", "vap_um_s",
                   "str_pct", "lin_pct", "speed_class", "progressiveness"]


@dataclass(frozen=True)
class MotilityReport:
    track_id: int
    vsl: float
    vcl: float
    vap: float
    str_pct: float
    lin_pct: float
    speed_class: str
    progressiveness: str

    @property
    def categories(self) -> frozenset:
        return frozenset({self.speed_class, self.progressiveness})


def _require_length(track: Track) -> None:
    if len(track.points) < 2:
        raise ValueError(f"track {track.id}: needs at least 2 points for velocities")


def _elapsed_seconds(track: Track, cfg: CalibrationConfig) -> float:
    return (track.points[-1].frame_index - track.points[0].frame_index) / cfg.fps


def _path_length(positions: Sequence[Tuple[float, float]]) -> float:
    return sum(euclidean_distance(a, b) for a, b in zip(positions, positions[1:]))


def vsl(track: Track, cfg: CalibrationConfig) -> float:
    """Straight-line velocity: endpoint distance over elapsed time."""
    _require_length(track)
    dist = euclidean_distance(track.points[0].position, track.points[-1].position)
    return dist * cfg.microns_per_pixel / _elapsed_seconds(track, cfg)


def vcl(track: Track, cfg: CalibrationConfig) -> float:
    """Curvilinear velocity: summed point-to-point path over elapsed time."""
    _require_length(track)
    dist = _path_length([p.position for p in track.points])
    return dist * cfg.microns_per_pixel / _elapsed_seconds(track, cfg)


def smoothed_positions(track: Track, window: int) -> List[Tuple[float, float]]:
    """Centered moving average of positions, window truncated
    symmetrically at the ends so both endpoints stay exact."""
    pts = [p.position for p in track.points]
    n = len(pts)
    half = window // 2
    out = []
    for i in range(n):
        k = min(i, n - 1 - i, half)
        xs = [pts[j][0] for j in range(i - k, i + k + 1)]
        ys = [pts[j][1] for j in range(i - k, i + k + 1)]
        out.append((sum(xs) / len(xs), sum(ys) / len(ys)))
    return out


def vap(track: Track, cfg: CalibrationConfig) -> float:
    """Average-path velocity: curvilinear velocity of the smoothed path."""
    _require_length(track)
    dist = _path_length(smoothed_positions(track, cfg.mot_vap_window_frames))
    return dist * cfg.microns_per_pixel / _elapsed_seconds(track, cfg)


def str_ratio(track: Track, cfg: CalibrationConfig) -> float:
    """Straightness VSL/VAP in percent; 0 for a stationary track."""
    v = vap(track, cfg)
    return 100.0 * vsl(track, cfg) / v if v > 0 else 0.0


def lin_ratio(track: Track, cfg: CalibrationConfig) -> float:
    """Linearity VSL/VCL in percent; 0 for a stationary track."""
    v = vcl(track, cfg)
    return 100.0 * vsl(track, cfg) / v if v > 0 else 0.0


def classify(vap_um_s: float, str_pct: float, cfg: CalibrationConfig) -> Tuple[str, str]:
    """Speed class and progressiveness of one track.

    Immotile takes precedence over everything. Speed buckets are
    half-open so every velocity lands in exactly one of them.
    """
    if vap_um_s < cfg.mot_immotile_um_s:
        return CATEGORY_IMMOTILE, CATEGORY_IMMOTILE
    if vap_um_s < cfg.mot_lvv_um_s:
        speed = CATEGORY_SLOW
    elif vap_um_s < cfg.mot_mvv_um_s:
        speed = CATEGORY_MEDIUM
    else:
        speed = CATEGORY_RAPID
    progressive = (vap_um_s >= cfg.mot_mvv_um_s
                   and str_pct > cfg.mot_str_threshold_pct)
    return speed, CATEGORY_PROGRESSIVE if progressive else CATEGORY_NON_PROGRESSIVE


def analyze_track(track: Track, cfg: CalibrationConfig) -> MotilityReport:
    v_sl = vsl(track, cfg)
    v_cl = vcl(track, cfg)
    v_ap = vap(track, cfg)
    straightness = str_ratio(track, cfg)
    linearity = lin_ratio(track, cfg)
    speed, progress = classify(v_ap, straightness, cfg)
    return MotilityReport(track_id=track.id, vsl=v_sl, vcl=v_cl, vap=v_ap,
                          str_pct=straightness, lin_pct=linearity,
                          speed_class=speed, progressiveness=progress)


def analyze(tracks: Sequence[Track], cfg: CalibrationConfig) -> List[MotilityReport]:
    return [analyze_track(t, cfg) for t in tracks]


def summarize(reports: Sequence[MotilityReport]) -> dict:
    """Per-video aggregate: parameter means and category counts."""
    if not reports:
        raise ValueError("cannot summarize zero motility reports")
    n = len(reports)
    means = {
        "vsl_um_s": sum(r.vsl for r in reports) / n,
        "vcl_um_s": sum(r.vcl for r in reports) / n,
        "vap_um_s": sum(r.vap for r in reports) / n,
        "str_pct": sum(r.str_pct for r in reports) / n,
        "lin_pct": sum(r.lin_pct for r in reports) / n,
    }
    categories = {}
    for name in (CATEGORY_IMMOTILE, CATEGORY_SLOW, CATEGORY_MEDIUM, CATEGORY_RAPID,
                 CATEGORY_NON_PROGRESSIVE, CATEGORY_PROGRESSIVE):
        count = sum(1 for r in reports
                    if name in (r.speed_class, r.progressiveness))
        categories[name] = {"count": count, "percent": 100.0 * count / n}
    return {"tracks": n, "means": means, "categories": categories}


def write_motility_csv(reports: Sequence[MotilityReport], path: Union[str, Path]) -> None:
    file = Path(path)
    file.parent.mkdir(parents=True, exist_ok=True)
    with file.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MOTILITY_HEADER)
        for r in sorted(reports, key=lambda r: r.track_id):
            writer.writerow([r.track_id, repr(r.vsl), repr(r.vcl), repr(r.vap),
                             repr(r.str_pct), repr(r.lin_pct),
                             r.speed_class, r.progressiveness])


def write_summary(summary: dict, path: Union[str, Path]) -> None:
    file = Path(path)
    file.parent.mkdir(parents=True, exist_ok=True)
    file.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
