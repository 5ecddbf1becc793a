"""Drive a tiled display wall as one virtual framebuffer."""
from .client import ClientSession, WallInfo, connect, query_info
from .codec import PixelBuffer, compress, decompress, psnr
from .mailbox import TimestampedMailbox
from .wall_config import Mode, Rect, WallConfig, display_region, load_config, parse_config, route_rect, virtual_size

__all__ = [
    "ClientSession",
    "Mode",
    "PixelBuffer",
    "Rect",
    "TimestampedMailbox",
    "WallConfig",
    "WallInfo",
    "compress",
    "connect",
    "decompress",
    "display_region",
    "load_config",
    "parse_config",
    "psnr",
    "query_info",
    "route_rect",
    "virtual_size",
]
