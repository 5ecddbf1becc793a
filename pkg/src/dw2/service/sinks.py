"""Destinations for completed per-display frames."""
from __future__ import annotations

import os
import tempfile
import threading
from pathlib import Path

import numpy as np
from PIL import Image

from ..codec import PixelBuffer


class NullSink:
    """Discards frames (benchmark mode)."""

    wants_pixels = False

    def __call__(self, display_id: int, frame_id: int, pixels: PixelBuffer | None) -> None:
        pass


class PngSink:
    """Writes ``frame_<frame>_display_<id>.png`` atomically into a directory."""

    wants_pixels = True

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path_for(self, display_id: int, frame_id: int) -> Path:
        return self.directory / f"frame_{frame_id}_display_{display_id}.png"

    def __call__(self, display_id: int, frame_id: int, pixels: PixelBuffer | None) -> None:
        target = self.path_for(display_id, frame_id)
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".png", dir=self.directory)
        try:
            with os.fdopen(fd, "wb") as fh:
                Image.fromarray(pixels.pixels, "RGBA").save(fh, "PNG", compress_level=1)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


class MemorySink:
    """Keeps every completed frame in memory; handy for tests."""

    wants_pixels = True

    def __init__(self):
        self.frames: dict[tuple[int, int], PixelBuffer] = {}
        self._lock = threading.Lock()

    def __call__(self, display_id: int, frame_id: int, pixels: PixelBuffer | None) -> None:
        with self._lock:
            self.frames[(display_id, frame_id)] = pixels


class WindowSink:
    """Shows each display in an OpenCV window (needs a GUI-capable OpenCV build)."""

    wants_pixels = True

    def __init__(self):
        import cv2

        self._cv2 = cv2

    def __call__(self, display_id: int, frame_id: int, pixels: PixelBuffer | None) -> None:
        bgr = np.ascontiguousarray(pixels.pixels[..., 2::-1])
        self._cv2.imshow(f"display {display_id}", bgr)
        self._cv2.waitKey(1)


def make_sink(spec: str):
    """``null``, ``memory``, ``window`` or ``png:<dir>``."""
    if spec == "null":
        return NullSink()
    if spec == "memory":
        return MemorySink()
    if spec == "window":
        return WindowSink()
    if spec.startswith("png:"):
        return PngSink(spec[4:])
    raise ValueError(f"unknown sink {spec!r}")


def sink_frame(sink, display_id: int, frame_id: int, fb) -> None:
    sink(display_id, frame_id, fb.buffer if getattr(sink, "wants_pixels", True) else None)
