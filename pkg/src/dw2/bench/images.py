"""Benchmark images: the hard-to-compress synthetic case, a natural-looking
stand-in for pre-rendered frames, and loading of real renders from disk."""
from __future__ import annotations

import logging

import numpy as np
from PIL import Image

from ..codec import PixelBuffer

log = logging.getLogger(__name__)


def generate_synthetic(width: int, height: int, tile_size: int, seed: int = 0) -> PixelBuffer:
    """Every tile gets its own color ramp with per-pixel noise on top, so JPEG
    finds almost no redundancy inside a tile."""
    rng = np.random.default_rng(seed)
    ty, tx = -(-height // tile_size), -(-width // tile_size)
    start = rng.integers(0, 256, (ty, tx, 3)).astype(np.float32)
    end = rng.integers(0, 256, (ty, tx, 3)).astype(np.float32)
    yy, xx = np.mgrid[0:height, 0:width]
    t = (((xx % tile_size) + (yy % tile_size)) / max(1, 2 * tile_size - 2)).astype(np.float32)[..., None]
    base = start[yy // tile_size, xx // tile_size] * (1 - t) + end[yy // tile_size, xx // tile_size] * t
    noise = rng.integers(-96, 97, (height, width, 3)).astype(np.float32)
    return PixelBuffer.from_rgb(np.clip(base + noise, 0, 255).astype(np.uint8))


def generate_photographic(width: int, height: int, seed: int = 0) -> PixelBuffer:
    """Smooth 1/f-spectrum color field with a few hard-edged shapes: compresses
    like a rendered scene rather than like noise."""
    rng = np.random.default_rng(seed)
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.rfftfreq(width)[None, :]
    f = np.sqrt(fx * fx + fy * fy)
    f[0, 0] = 1.0
    channels = []
    for _ in range(3):
        spectrum = (rng.normal(size=f.shape) + 1j * rng.normal(size=f.shape)) / f**1.6
        spectrum[0, 0] = 0
        field = np.fft.irfft2(spectrum, s=(height, width))
        field = (field - field.mean()) / (field.std() + 1e-12)
        channels.append(field)
    mix = rng.uniform(0.3, 1.0, (3, 3))
    rgb = np.einsum("ij,jhw->hwi", mix, np.stack(channels)) * 40 + 128
    yy, xx = np.mgrid[0:height, 0:width]
    for _ in range(6):
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        r = rng.uniform(0.05, 0.2) * min(width, height)
        mask = (xx - cx) ** 2 + (yy - cy) ** 2 < r * r
        shade = 1.0 - 0.4 * ((xx - cx) / (r + 1e-9))[mask, None]
        rgb[mask] = 0.5 * rgb[mask] + 0.5 * rng.uniform(30, 225, 3) * shade
    return PixelBuffer.from_rgb(np.clip(rgb, 0, 255).astype(np.uint8))


def constant_image(width: int, height: int, color=(40, 90, 160)) -> PixelBuffer:
    rgb = np.empty((height, width, 3), np.uint8)
    rgb[...] = color
    return PixelBuffer.from_rgb(rgb)


def load_image(path: str, size: tuple[int, int] | None = None, strict: bool = False) -> PixelBuffer:
    """Load a pre-rendered frame; rescale to ``size`` (width, height) unless strict."""
    with Image.open(path) as im:
        im = im.convert("RGBA")
        if size is not None and im.size != tuple(size):
            if strict:
                raise ValueError(f"{path} is {im.size[0]}x{im.size[1]}, wall is {size[0]}x{size[1]}")
            log.warning("rescaling %s from %dx%d to %dx%d", path, *im.size, *size)
            im = im.resize(size, Image.BILINEAR)
        return PixelBuffer(np.array(im))
