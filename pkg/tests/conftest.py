import numpy as np
import pytest

from spermtrack.model import BoundingBox, CalibrationConfig, Frame, Track, TrackPoint


@pytest.fixture
def cfg():
    return CalibrationConfig()


def render_blobs(centers, width=200, height=160, sigma=3.0, amplitude=180.0,
                 base=20.0, noise=0.0, rng=None):
    """One synthetic frame image with Gaussian blobs at the given centers."""
    img = np.full((height, width), base, dtype=np.float64)
    if rng is not None and noise > 0:
        img += rng.normal(0.0, noise, size=img.shape)
    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]
    for cx, cy in centers:
        img += amplitude * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * sigma ** 2))
    return np.clip(img, 0, 255).astype(np.uint8)


def blob_frame(index, centers, **kwargs):
    return Frame(index=index, pixels=render_blobs(centers, **kwargs))


def box_around(cx, cy, half=9.0):
    return BoundingBox(cx - half, cy - half, cx + half, cy + half)


def make_track(track_id, positions, start_frame=0, source="detected"):
    """Track from a list of (x, y) positions on consecutive frames."""
    points = tuple(
        TrackPoint(frame_index=start_frame + i, position=pos, source=source)
        for i, pos in enumerate(positions)
    )
    return Track(id=track_id, points=points)


def straight_track(track_id, start, velocity, n, start_frame=0):
    x0, y0 = start
    vx, vy = velocity
    return make_track(
        track_id,
        [(x0 + vx * i, y0 + vy * i) for i in range(n)],
        start_frame=start_frame,
    )
