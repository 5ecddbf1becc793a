from .coordinator import Coordinator
from .dispatcher import Dispatcher
from .display import Display
from .framebuffer import DisplayFramebuffer, FrameState, write_tile
from .local import LocalWall, loopback_config
from .sinks import MemorySink, NullSink, PngSink, make_sink, sink_frame

__all__ = [
    "Coordinator",
    "Dispatcher",
    "Display",
    "DisplayFramebuffer",
    "FrameState",
    "LocalWall",
    "MemorySink",
    "NullSink",
    "PngSink",
    "loopback_config",
    "make_sink",
    "sink_frame",
    "write_tile",
]
