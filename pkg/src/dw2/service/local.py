"""All service roles of a wall running as threads of one process (desk scale)."""
from __future__ import annotations

import logging
import time
from typing import Callable

from ..socket_group import listen, make_shaper
from ..wall_config import Mode, WallConfig, grid_config
from .coordinator import Coordinator
from .dispatcher import Dispatcher
from .display import Display
from .sinks import NullSink

log = logging.getLogger(__name__)


def loopback_config(
    columns: int = 2,
    rows: int = 2,
    display_width: int = 320,
    display_height: int = 240,
    **kwargs,
) -> tuple[WallConfig, dict]:
    """A wall on 127.0.0.1 with OS-assigned ports.

    Returns the config and the already-bound listeners to hand to LocalWall,
    so there is no window in which another process can grab a port.
    """
    n = columns * rows
    coord = listen("127.0.0.1", 0)
    disp = listen("127.0.0.1", 0)
    displays = [listen("127.0.0.1", 0) for _ in range(n)]
    config = grid_config(
        columns,
        rows,
        display_width,
        display_height,
        base_port=coord.getsockname()[1],
        dispatcher_port=disp.getsockname()[1],
        ports=[s.getsockname()[1] for s in displays],
        **kwargs,
    )
    return config, {"coordinator": coord, "dispatcher": disp, "displays": displays}


class LocalWall:
    """Coordinator, displays and (in dispatcher mode) the dispatcher, as threads.

    ``sink`` is either one sink shared by all displays or a callable
    ``display_id -> sink``.
    """

    def __init__(
        self,
        config: WallConfig,
        *,
        listeners: dict | None = None,
        sink=None,
        decomp_threads: int | None = None,
        token: int | None = None,
        link_mbps: float | None = None,
    ):
        self.config = config
        listeners = listeners or {}
        self.coordinator = Coordinator(config, listeners.get("coordinator"), token=token, shaper=make_shaper(link_mbps))
        make_sink: Callable = sink if callable(sink) and not hasattr(sink, "wants_pixels") else (lambda _i: sink)
        display_listeners = listeners.get("displays") or [None] * config.num_displays
        self.displays = [
            Display(config, i, make_sink(i) or NullSink(), decomp_threads, display_listeners[i], make_shaper(link_mbps))
            for i in range(config.num_displays)
        ]
        self.dispatcher = None
        if config.mode == Mode.DISPATCHER:
            self.dispatcher = Dispatcher(config, listeners.get("dispatcher"), make_shaper(link_mbps))
        elif listeners.get("dispatcher") is not None:
            listeners["dispatcher"].close()

    @classmethod
    def loopback(cls, columns=2, rows=2, display_width=320, display_height=240, *, sink=None,
                 decomp_threads=None, link_mbps=None, **config_kwargs) -> LocalWall:
        config, listeners = loopback_config(columns, rows, display_width, display_height, **config_kwargs)
        return cls(config, listeners=listeners, sink=sink, decomp_threads=decomp_threads, link_mbps=link_mbps)

    @property
    def roles(self) -> list:
        return [self.coordinator, *self.displays] + ([self.dispatcher] if self.dispatcher else [])

    def start(self) -> LocalWall:
        self.coordinator.start()
        for d in self.displays:
            d.start()
        if self.dispatcher is not None:
            self.dispatcher.start()
        return self

    def wait(self, timeout: float | None = None) -> bool:
        """Wait for every role to finish; True if they all did."""
        deadline = None if timeout is None else time.monotonic() + timeout
        for role in self.roles:
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            role.join(remaining)
        return not any(role.running for role in self.roles)

    def stop(self, timeout: float = 5.0) -> None:
        self.coordinator._shutdown()
        for d in self.displays:
            d.stop()
        if self.dispatcher is not None:
            self.dispatcher.stop()
        if not self.wait(timeout):
            log.warning("local wall did not stop within %.1fs", timeout)

    def __enter__(self) -> LocalWall:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def stats(self) -> dict:
        return {
            "coordinator": self.coordinator.stats(),
            "displays": [d.stats() for d in self.displays],
            "dispatcher": self.dispatcher.stats() if self.dispatcher is not None else None,
        }
