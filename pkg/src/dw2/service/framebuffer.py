"""One display's shard of the virtual framebuffer, with pixel-coverage tracking."""
from __future__ import annotations

import numpy as np

from ..codec import PixelBuffer
from ..protocol import TileHeader
from ..wall_config import Rect, WallConfig, display_region


class FrameState:
    """Coverage of one display for one frame; complete once every pixel was written."""

    def __init__(self, frame_id: int, width: int, height: int):
        self.frame_id = frame_id
        self.coverage = np.zeros((height, width), dtype=bool)
        self.covered_count = 0
        self.expected_count = width * height

    @property
    def complete(self) -> bool:
        return self.covered_count == self.expected_count

    def mark(self, x: int, y: int, width: int, height: int) -> int:
        cell = self.coverage[y : y + height, x : x + width]
        newly = cell.size - int(np.count_nonzero(cell))
        cell[...] = True
        self.covered_count += newly
        return newly


class DisplayFramebuffer:
    def __init__(self, config: WallConfig, display_id: int, first_frame: int = 0):
        self.display_id = display_id
        self.region = display_region(config, display_id)
        self.buffer = PixelBuffer.blank(self.region.width, self.region.height)
        self.state = FrameState(first_frame, self.region.width, self.region.height)

    @property
    def frame_id(self) -> int:
        return self.state.frame_id

    def write_tile(self, header: TileHeader, pixels: PixelBuffer) -> int:
        """Copy the part of the tile inside this display; returns newly covered pixels."""
        if (pixels.width, pixels.height) != (header.width, header.height):
            raise ValueError(
                f"pixels are {pixels.width}x{pixels.height}, header says {header.width}x{header.height}"
            )
        overlap = self.region.intersect(Rect(header.x, header.y, header.width, header.height))
        if overlap is None:
            return 0
        sx, sy = overlap.x - header.x, overlap.y - header.y
        dx, dy = overlap.x - self.region.x, overlap.y - self.region.y
        w, h = overlap.width, overlap.height
        self.buffer.pixels[dy : dy + h, dx : dx + w] = pixels.pixels[sy : sy + h, sx : sx + w]
        return self.state.mark(dx, dy, w, h)

    def advance(self) -> None:
        self.state = FrameState(self.state.frame_id + 1, self.region.width, self.region.height)


def write_tile(fb: DisplayFramebuffer, header: TileHeader, pixels: PixelBuffer) -> int:
    return fb.write_tile(header, pixels)
