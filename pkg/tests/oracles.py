"""Independent reference implementations used as test oracles.

Nothing here imports the geometry, codec or framing code under test.
"""
from __future__ import annotations

import numpy as np


def classify_pixels(xs, ys, columns, rows, width, height, bezel_x, bezel_y):
    """Display index of every virtual pixel (``-1`` for bezel), one pixel at a time."""
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    col, in_x = np.divmod(xs, width + bezel_x)
    row, in_y = np.divmod(ys, height + bezel_y)
    visible = (in_x < width) & (in_y < height) & (col < columns) & (row < rows)
    return np.where(visible, row * columns + col, -1)


def route_by_pixels(columns, rows, width, height, bezel_x, bezel_y, tile):
    """Brute-force routing: classify each pixel of ``tile`` (x, y, w, h) and
    return ``[(display_id, (x, y, w, h)), ...]`` sorted by display id.

    The per-display pixel sets are checked to be rectangles, so the bounding
    box is the exact overlap.
    """
    x, y, w, h = tile
    yy, xx = np.mgrid[y : y + h, x : x + w]
    ids = classify_pixels(xx, yy, columns, rows, width, height, bezel_x, bezel_y)
    out = []
    for d in np.unique(ids):
        if d < 0:
            continue
        mask = ids == d
        py, px = np.nonzero(mask)
        bx0, by0 = int(px.min()), int(py.min())
        bw, bh = int(px.max()) - bx0 + 1, int(py.max()) - by0 + 1
        assert mask.sum() == bw * bh, "display overlap is not a rectangle"
        out.append((int(d), (x + bx0, y + by0, bw, bh)))
    return out


def reference_psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR over the RGB channels of two uint8 RGBA arrays."""
    diff = a[..., :3].astype(np.float64) - b[..., :3].astype(np.float64)
    mse = float(np.mean(diff * diff))
    return float("inf") if mse == 0 else 10.0 * np.log10(255.0**2 / mse)


def reference_jpeg_roundtrip(rgba: np.ndarray, quality: int) -> tuple[np.ndarray, int]:
    """Encode/decode with OpenCV's libjpeg; returns (decoded RGBA, encoded size)."""
    import cv2

    bgr = np.ascontiguousarray(rgba[..., 2::-1])
    ok, buf = cv2.imencode(".jpg", bgr, [cv2.IMWRITE_JPEG_QUALITY, quality])
    assert ok
    dec = cv2.imdecode(buf, cv2.IMREAD_COLOR)
    out = np.empty(rgba.shape, np.uint8)
    out[..., :3] = dec[..., ::-1]
    out[..., 3] = 255
    return out, len(buf)


class MailboxModel:
    """Sequential model of the mailbox: a list scanned oldest-first."""

    def __init__(self):
        self.items: list[tuple[int, object]] = []
        self.closed = False

    def post(self, frame_id, item):
        self.items.append((frame_id, item))

    def pop_where(self, accept):
        for i, (f, item) in enumerate(self.items):
            if accept(f):
                return self.items.pop(i)
        return None
