"""Head-node dispatcher: forwards each client tile to the displays it overlaps,
routing on the tile header only (payloads are never decompressed)."""
from __future__ import annotations

import logging
import socket
import threading
from collections import Counter

from ..mailbox import MailboxClosed, TimestampedMailbox
from ..protocol import Role, Shutdown, Tile
from ..socket_group import (
    Connection,
    GroupClosed,
    GroupError,
    LinkShaper,
    SocketGroup,
    accept_group,
    connect_group,
    listen,
)
from ..wall_config import WallConfig, route_rect
from .display import control_handshake

log = logging.getLogger(__name__)


class Dispatcher:
    def __init__(self, config: WallConfig, listener: socket.socket | None = None, shaper: LinkShaper | None = None):
        self.config = config
        self.shaper = shaper
        ep = config.dispatcher_endpoint
        self.listener = listener or listen(ep.host, ep.port)
        self.counters: Counter[str] = Counter()
        self.clients: SocketGroup | None = None
        self.displays: SocketGroup | None = None
        self.control: Connection | None = None
        self.error: BaseException | None = None
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def start(self) -> Dispatcher:
        self._thread = threading.Thread(target=self.run, name="dispatcher", daemon=True)
        self._thread.start()
        return self

    def join(self, timeout: float | None = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)

    @property
    def running(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    def stop(self) -> None:
        self._stop.set()
        if self.clients is not None:
            self.clients.incoming.close()

    def run(self) -> None:
        try:
            self._serve()
        except GroupClosed:
            pass
        except GroupError as exc:
            if self._stop.is_set():
                return
            self.error = exc
            log.error("dispatcher: %s", exc)
        finally:
            for group in (self.clients, self.displays):
                if group is not None:
                    group.close(timeout=2.0)
            if self.control is not None:
                self.control.close(timeout=2.0)
            self.listener.close()

    def _serve(self) -> None:
        sock, info = control_handshake(self.config, Role.DISPATCHER, 0, 1, stop=self._stop)
        inbox = TimestampedMailbox()
        self.control = Connection(sock, inbox, 0, name="dispatcher-control", shaper=self.shaper).start()
        threading.Thread(target=self._watch_control, args=(inbox,), daemon=True).start()

        endpoints = [(d.host, d.port) for d in self.config.displays]
        self.displays = connect_group(
            endpoints, info.session_token, 0, 1, role=Role.DISPATCHER, shaper=self.shaper, stop=self._stop
        )
        self.clients = accept_group(
            self.listener, info.session_token, None, timeout=None, stop=self._stop, role=Role.CLIENT,
            shaper=self.shaper,
        )
        incoming = self.clients.incoming
        while True:
            try:
                _, rcv = incoming.pop_any()
            except MailboxClosed:
                break
            if isinstance(rcv.message, Tile):
                self.forward(rcv.message)
        self.displays.close()
        self._stop.wait()

    def forward(self, tile: Tile) -> int:
        """Send ``tile`` unchanged to every display it overlaps; returns the fan-out."""
        h = tile.header
        self.counters["tiles_received"] += 1
        self.counters["payload_bytes_received"] += len(tile.payload)
        try:
            routes = route_rect(self.config, h.rect)
        except ValueError as exc:
            log.warning("dispatcher dropped out-of-bounds tile: %s", exc)
            routes = []
        if not routes:
            self.counters["tiles_dropped"] += 1
            return 0
        for display_id, _ in routes:
            self.displays.send_to(display_id, tile)
            self.counters["tiles_forwarded"] += 1
            self.counters["payload_bytes_forwarded"] += len(tile.payload)
        return len(routes)

    def _watch_control(self, inbox: TimestampedMailbox) -> None:
        while True:
            try:
                _, rcv = inbox.pop_any()
            except MailboxClosed:
                return
            if rcv.message is None or isinstance(rcv.message, Shutdown):
                self._stop.set()
                return

    def stats(self) -> dict:
        link_bytes = 0
        for group in (self.clients, self.displays):
            if group is not None:
                s = group.stats()
                link_bytes += s["bytes_sent"] + s["bytes_received"]
        return {**dict(self.counters), "link_bytes": link_bytes}
