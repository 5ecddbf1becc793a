"""Tile pixel payload compression (JPEG or raw RGBA8) and PSNR."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .protocol import Codec

RAW = "raw"


class CodecError(ValueError):
    """Corrupt payload or dimension mismatch; aborts the tile, not the connection."""


@dataclass
class PixelBuffer:
    """Row-major RGBA8 pixels held as a ``(height, width, 4)`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.dtype != np.uint8 or p.ndim != 3 or p.shape[2] != 4:
            raise ValueError(f"expected (h, w, 4) uint8 array, got {p.shape} {p.dtype}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_bytes(cls, data: bytes, width: int, height: int) -> PixelBuffer:
        if len(data) != width * height * 4:
            raise CodecError(f"expected {width * height * 4} bytes for {width}x{height}, got {len(data)}")
        return cls(np.frombuffer(data, dtype=np.uint8).reshape(height, width, 4))

    @classmethod
    def from_rgb(cls, rgb: np.ndarray) -> PixelBuffer:
        h, w = rgb.shape[:2]
        out = np.empty((h, w, 4), np.uint8)
        out[..., :3] = rgb[..., :3]
        out[..., 3] = 255
        return cls(out)

    @classmethod
    def blank(cls, width: int, height: int) -> PixelBuffer:
        return cls(np.zeros((height, width, 4), np.uint8))

    def tobytes(self) -> bytes:
        return np.ascontiguousarray(self.pixels).tobytes()

    def crop(self, x: int, y: int, width: int, height: int) -> PixelBuffer:
        return PixelBuffer(self.pixels[y : y + height, x : x + width])

    def __eq__(self, other):
        if not isinstance(other, PixelBuffer):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)


def compress(pixels: PixelBuffer, quality: int | str = 75) -> tuple[Codec, bytes]:
    """Encode a tile. ``quality`` is 1..100 for baseline 4:2:0 JPEG, or ``"raw"``."""
    if pixels.width == 0 or pixels.height == 0:
        raise CodecError("zero-sized buffer")
    if quality == RAW or quality is None:
        return Codec.RAW_RGBA8, pixels.tobytes()
    if isinstance(quality, bool) or not isinstance(quality, int) or not 1 <= quality <= 100:
        raise ValueError(f"quality must be 1..100 or 'raw', got {quality!r}")
    rgb = np.ascontiguousarray(pixels.pixels[..., :3])
    out = io.BytesIO()
    Image.fromarray(rgb, "RGB").save(out, "JPEG", quality=quality, subsampling=2, optimize=False, progressive=False)
    return Codec.JPEG, out.getvalue()


def decompress(codec: Codec | int, payload: bytes, width: int, height: int) -> PixelBuffer:
    codec = Codec(codec)
    if codec == Codec.RAW_RGBA8:
        return PixelBuffer.from_bytes(payload, width, height)
    try:
        with Image.open(io.BytesIO(payload)) as im:
            if im.format != "JPEG":
                raise CodecError(f"not a JPEG stream ({im.format})")
            im.load()
            rgb = np.asarray(im.convert("RGB"))
    except CodecError:
        raise
    except Exception as exc:  # PIL raises a zoo of types for bad streams
        raise CodecError(f"corrupt JPEG payload: {exc}") from None
    if rgb.shape[:2] != (height, width):
        raise CodecError(f"decoded {rgb.shape[1]}x{rgb.shape[0]}, header says {width}x{height}")
    return PixelBuffer.from_rgb(rgb)


def psnr(a: PixelBuffer, b: PixelBuffer) -> float:
    """PSNR in dB over the RGB channels; +inf for identical buffers."""
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(f"dimension mismatch: {a.pixels.shape} vs {b.pixels.shape}")
    diff = a.pixels[..., :3].astype(np.float64) - b.pixels[..., :3].astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 * 255.0 / mse)
