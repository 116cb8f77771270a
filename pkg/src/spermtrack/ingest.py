"""Frame-sequence loading, multi-frame stacking and detection file I/O.

Also provides a classical fallback detector (Gaussian smoothing, a
Laplacian-of-Gaussian response, Otsu thresholding and an area filter) so
the pipeline runs end to end without an external neural detector.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
from PIL import Image
from scipy import ndimage
from skimage.filters import threshold_otsu

from .model import BoundingBox, Detection, Frame

DETECTIONS_HEADER = ["frame", "x_min", "y_min", "x_max", "y_max", "score"]

_FRAME_FILE_RE = re.compile(r"^frame_(\d+)\.(png|pgm)$", re.IGNORECASE)


@dataclass(frozen=True)
class StackedInput:
    """2k+1 temporally ordered frames centered on one frame."""

    center_index: int
    channels: tuple
    k: int

    def __post_init__(self):
        if len(self.channels) != 2 * self.k + 1:
            raise ValueError("channel count must be 2k+1")
        w, h = self.channels[0].width, self.channels[0].height
        for ch in self.channels:
            if ch.width != w or ch.height != h:
                raise ValueError("all channels must share dimensions")
        if self.channels[self.k].index != self.center_index:
            raise ValueError("middle channel must be the center frame")


@dataclass(frozen=True)
class BlobDetectorParams:
    gaussian_sigma: float = 1.0
    log_sigma: float = 3.0
    min_area_px: int = 5
    threshold_mode: str = "otsu"  # "otsu" or "fixed"
    fixed_threshold: float = 0.0
    motion_weight: float = 0.5  # weight of the temporal std channel for stacked input

    def __post_init__(self):
        if self.gaussian_sigma <= 0 or self.log_sigma <= 0:
            raise ValueError("sigmas must be strictly positive")
        if self.min_area_px < 1:
            raise ValueError("min_area_px must be >= 1")
        if self.threshold_mode not in ("otsu", "fixed"):
            raise ValueError(f"unknown threshold_mode {self.threshold_mode!r}")


def load_sequence(path: Union[str, Path]) -> List[Frame]:
    """Load the frame files of one video directory, re-based to 0..n-1.

    Files must be 8-bit grayscale PNG or PGM named ``frame_<index>.<ext>``
    with zero-padded ascending indices.
    """
    directory = Path(path)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory}: not a directory")
    entries = []
    for child in sorted(directory.iterdir()):
        m = _FRAME_FILE_RE.match(child.name)
        if m:
            entries.append((int(m.group(1)), child))
    if not entries:
        raise ValueError(f"{directory}: no frames")
    entries.sort(key=lambda e: e[0])

    frames: List[Frame] = []
    for new_index, (_, file) in enumerate(entries):
        try:
            with Image.open(file) as im:
                pixels = np.asarray(im.convert("L"), dtype=np.uint8)
        except (OSError, ValueError) as exc:
            raise ValueError(f"{file}: unreadable image ({exc})") from exc
        if frames and pixels.shape != frames[0].pixels.shape:
            raise ValueError(
                f"{file}: dimension mismatch "
                f"{pixels.shape[::-1]} vs {frames[0].pixels.shape[::-1]}"
            )
        frames.append(Frame(index=new_index, pixels=pixels))
    return frames


def write_sequence(frames: Sequence[Frame], path: Union[str, Path], ext: str = "png") -> None:
    """Write frames as ``frame_<zero-padded index>.<ext>`` files."""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    pad = max(3, len(str(max(f.index for f in frames))))
    for frame in frames:
        name = f"frame_{frame.index:0{pad}d}.{ext}"
        Image.fromarray(frame.pixels, mode="L").save(directory / name)


def stack_frames(frames: Sequence[Frame], center: int, n: int) -> StackedInput:
    """Build the n-channel input centered on ``center``.

    Out-of-range neighbours are clamped to the nearest existing frame, so
    the stack never reads outside the video.
    """
    if n < 1 or n % 2 == 0:
        raise ValueError(f"channel count must be odd and >= 1, got {n}")
    if not 0 <= center < len(frames):
        raise ValueError(f"center {center} out of range 0..{len(frames) - 1}")
    k = (n - 1) // 2
    last = len(frames) - 1
    channels = tuple(frames[min(max(center + d, 0), last)] for d in range(-k, k + 1))
    return StackedInput(center_index=frames[center].index, channels=channels, k=k)


def export_stacked_tiff(stacked: StackedInput, directory: Union[str, Path]) -> Path:
    """Write a stack as a multi-channel 8-bit TIFF named ``stack_<center>.tiff``."""
    out_dir = Path(directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / f"stack_{stacked.center_index}.tiff"
    pages = [Image.fromarray(ch.pixels, mode="L") for ch in stacked.channels]
    pages[0].save(out, save_all=True, append_images=pages[1:])
    return out


def read_detections(path: Union[str, Path]) -> Dict[int, List[Detection]]:
    """Read a detections CSV, grouped and sorted by frame index.

    Malformed rows are rejected with their line number.
    """
    file = Path(path)
    if not file.is_file():
        raise FileNotFoundError(f"{file}: not found")
    grouped: Dict[int, List[Detection]] = {}
    with file.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{file}: empty file, expected header "
                             f"{','.join(DETECTIONS_HEADER)}") from None
        if [h.strip() for h in header] != DETECTIONS_HEADER:
            raise ValueError(
                f"{file}: line 1: bad header {','.join(header)!r}, "
                f"expected {','.join(DETECTIONS_HEADER)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise ValueError(f"{file}: line {lineno}: expected 6 fields, got {len(row)}")
            try:
                frame = int(row[0])
                x_min, y_min, x_max, y_max, score = (float(v) for v in row[1:])
            except ValueError as exc:
                raise ValueError(f"{file}: line {lineno}: {exc}") from None
            try:
                det = Detection(frame_index=frame,
                                box=BoundingBox(x_min, y_min, x_max, y_max),
                                score=score)
            except ValueError as exc:
                raise ValueError(f"{file}: line {lineno}: {exc}") from None
            grouped.setdefault(frame, []).append(det)
    return {k: grouped[k] for k in sorted(grouped)}


def write_detections(detections: Sequence[Detection], path: Union[str, Path]) -> None:
    """Write detections in the CSV schema read back by :func:`read_detections`."""
    file = Path(path)
    file.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted(detections, key=lambda d: d.frame_index)
    with file.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(DETECTIONS_HEADER)
        for d in ordered:
            writer.writerow([
                d.frame_index,
                repr(d.box.x_min), repr(d.box.y_min),
                repr(d.box.x_max), repr(d.box.y_max),
                repr(d.score),
            ])


def _blob_response(input_: Union[Frame, StackedInput], params: BlobDetectorParams) -> np.ndarray:
    """Bright-blob response map: smoothed, LoG-filtered, sign-flipped."""
    if isinstance(input_, StackedInput):
        stackpx = np.stack([ch.pixels.astype(np.float64) for ch in input_.channels])
        work = stackpx[input_.k]
        if len(input_.channels) > 1:
            # moving objects leave temporal variance; boost them in the middle frame
            work = work + params.motion_weight * stackpx.std(axis=0)
    else:
        work = input_.pixels.astype(np.float64)
    smoothed = ndimage.gaussian_filter(work, params.gaussian_sigma)
    # bright blobs give negative LoG responses; flip so peaks are positive
    return -ndimage.gaussian_laplace(smoothed, params.log_sigma)


def detect_blobs(
    input_: Union[Frame, StackedInput],
    params: BlobDetectorParams = BlobDetectorParams(),
) -> List[Detection]:
    """Detect bright blobs on one frame (or stacked input).

    Returns one detection per connected above-threshold region whose area
    passes ``min_area_px``. Scores are the region's peak response divided
    by the global peak, so the strongest blob scores 1.0.
    """
    frame_index = input_.center_index if isinstance(input_, StackedInput) else input_.index
    response = _blob_response(input_, params)
    peak = float(response.max())
    if peak <= 0 or not np.isfinite(peak):
        return []
    if params.threshold_mode == "fixed":
        threshold = params.fixed_threshold
    else:
        if np.ptp(response) < 1e-12:  # constant response, nothing to separate
            return []
        threshold = threshold_otsu(response, nbins=256)
    mask = response > threshold
    labels, count = ndimage.label(mask)
    if count == 0:
        return []

    detections: List[Detection] = []
    half = 3.0 * params.log_sigma  # box matches the blob scale the LoG is tuned to
    slices = ndimage.find_objects(labels)
    for label, slc in enumerate(slices, start=1):
        region = labels[slc] == label
        if int(region.sum()) < params.min_area_px:
            continue
        weights = np.where(region, response[slc] - threshold, 0.0)
        total = float(weights.sum())
        ys, xs = np.mgrid[slc[0], slc[1]]
        cy = float((ys * weights).sum() / total)
        cx = float((xs * weights).sum() / total)
        box = BoundingBox(cx - half, cy - half, cx + half, cy + half)
        score = float(np.where(region, response[slc], 0.0).max() / peak)
        detections.append(Detection(frame_index=frame_index, box=box, score=score))
    detections.sort(key=lambda d: (-d.score, d.box.x_min, d.box.y_min))
    return detections
