"""Display process: receive tiles, decompress them on a worker pool, fill the
framebuffer shard, and report completion to the coordinator."""
from __future__ import annotations

import logging
import os
import socket
import threading
import time
from collections import Counter

from ..codec import CodecError, PixelBuffer, decompress
from ..mailbox import MailboxClosed, TimestampedMailbox
from ..protocol import (
    DisplayFrameComplete,
    InfoReply,
    ProtocolError,
    QueryInfo,
    Register,
    RegisterAck,
    Role,
    Shutdown,
    Tile,
    read_message,
    write_message,
)
from ..socket_group import (
    Connection,
    GroupClosed,
    GroupError,
    HandshakeError,
    LinkShaper,
    SocketGroup,
    accept_group,
    listen,
    open_connection,
)
from ..wall_config import Mode, WallConfig
from .framebuffer import DisplayFramebuffer
from .sinks import NullSink

log = logging.getLogger(__name__)

# time allowed to drain queued tiles after the coordinator says shut down
SHUTDOWN_GRACE = 2.0


def default_decomp_threads() -> int:
    return max(1, (os.cpu_count() or 1) - 2)


def control_handshake(
    config: WallConfig, role: Role, rank: int, count: int, timeout: float = 30.0, stop: threading.Event | None = None
):
    """Open the control link to the coordinator: learn the token, then register."""
    ep = config.coordinator
    sock = open_connection(ep.host, ep.port, timeout, stop)
    sock.settimeout(timeout)
    try:
        write_message(sock, QueryInfo())
        got = read_message(sock)
        if got is None or not isinstance(got[0], InfoReply):
            raise HandshakeError("coordinator did not answer QueryInfo")
        info = got[0]
        write_message(sock, Register(info.session_token, rank, count, role))
        got = read_message(sock)
        if got is None or not isinstance(got[0], RegisterAck) or got[0].status != 0:
            raise HandshakeError(f"coordinator rejected {role.name.lower()} {rank}")
    except (OSError, ProtocolError) as exc:
        sock.close()
        raise HandshakeError(f"control handshake failed: {exc}") from None
    except BaseException:
        sock.close()
        raise
    sock.settimeout(None)
    return sock, info


class Display:
    def __init__(
        self,
        config: WallConfig,
        display_id: int,
        sink=None,
        decomp_threads: int | None = None,
        listener: socket.socket | None = None,
        shaper: LinkShaper | None = None,
    ):
        self.config = config
        self.shaper = shaper
        self.display_id = display_id
        self.sink = sink if sink is not None else NullSink()
        self.decomp_threads = decomp_threads or default_decomp_threads()
        spec = config.displays[display_id]
        self.listener = listener or listen(spec.host, spec.port)
        self.fb = DisplayFramebuffer(config, display_id)
        self.current_frame = 0
        self.completions: Counter[int] = Counter()
        self.counters: Counter[str] = Counter()
        self.group: SocketGroup | None = None
        self.control: Connection | None = None
        self.error: BaseException | None = None
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._running = threading.Event()
        self._running.set()
        self._sink_box = TimestampedMailbox()
        self._thread: threading.Thread | None = None

    def start(self) -> Display:
        self._thread = threading.Thread(target=self.run, name=f"display{self.display_id}", daemon=True)
        self._thread.start()
        return self

    def join(self, timeout: float | None = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)

    @property
    def running(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    def pause(self) -> None:
        """Stall the decompression workers (tiles keep queueing)."""
        self._running.clear()

    def resume(self) -> None:
        self._running.set()

    def stop(self) -> None:
        self._stop.set()

    def run(self) -> None:
        sink_thread = threading.Thread(target=self._sink_loop, name=f"display{self.display_id}-sink", daemon=True)
        sink_thread.start()
        try:
            self._serve()
        except GroupClosed:
            pass
        except GroupError as exc:
            if self._stop.is_set():
                return
            self.error = exc
            log.error("display %d: %s", self.display_id, exc)
        finally:
            self._sink_box.close()
            sink_thread.join()
            if self.group is not None:
                self.group.close(timeout=2.0)
            if self.control is not None:
                self.control.close(timeout=2.0)
            self.listener.close()

    def _serve(self) -> None:
        sock, info = control_handshake(
            self.config, Role.DISPLAY, self.display_id, self.config.num_displays, stop=self._stop
        )
        inbox = TimestampedMailbox()
        self.control = Connection(
            sock, inbox, 0, name=f"display{self.display_id}-control", shaper=self.shaper
        ).start()
        threading.Thread(target=self._watch_control, args=(inbox,), daemon=True).start()

        dispatcher = self.config.mode == Mode.DISPATCHER
        self.group = accept_group(
            self.listener,
            info.session_token,
            expected_peers=1 if dispatcher else None,
            timeout=None,
            stop=self._stop,
            role=Role.DISPATCHER if dispatcher else Role.CLIENT,
            shaper=self.shaper,
        )
        workers = [
            threading.Thread(target=self._worker, name=f"display{self.display_id}-decomp{i}", daemon=True)
            for i in range(self.decomp_threads)
        ]
        for w in workers:
            w.start()
        stop_seen = None
        while any(w.is_alive() for w in workers):
            for w in workers:
                w.join(0.05)
            if self._stop.is_set():
                stop_seen = stop_seen or time.monotonic()
                if time.monotonic() - stop_seen > SHUTDOWN_GRACE:
                    self._running.set()
                    self.group.close(timeout=1.0)
        # the coordinator ends the session; leaving earlier would look like a crash
        self._stop.wait()

    def _watch_control(self, inbox: TimestampedMailbox) -> None:
        while True:
            try:
                _, rcv = inbox.pop_any()
            except MailboxClosed:
                return
            if rcv.message is None or isinstance(rcv.message, Shutdown):
                self._stop.set()
                return

    def _worker(self) -> None:
        incoming = self.group.incoming
        while True:
            self._running.wait()
            try:
                frame, rcv = incoming.pop_where(lambda f: f <= self.current_frame)
            except MailboxClosed:
                return
            msg = rcv.message
            if not isinstance(msg, Tile):
                continue
            h = msg.header
            with self._lock:
                self.counters["tiles_received"] += 1
                self.counters["payload_bytes"] += len(msg.payload)
                if frame < self.current_frame:
                    self.counters["late_tiles"] += 1
                    continue
            try:
                pixels = decompress(h.codec, msg.payload, h.width, h.height)
            except CodecError as exc:
                with self._lock:
                    self.counters["malformed_tiles"] += 1
                log.warning("display %d dropped malformed tile: %s", self.display_id, exc)
                continue
            with self._lock:
                if h.frame_id != self.fb.frame_id:
                    self.counters["late_tiles"] += 1
                    continue
                self.fb.write_tile(h, pixels)
                if not self.fb.state.complete:
                    continue
                done = self.fb.frame_id
                snapshot = self.fb.buffer.pixels.copy() if getattr(self.sink, "wants_pixels", True) else None
                self.completions[done] += 1
                self.fb.advance()
                self.current_frame = self.fb.frame_id
            try:
                self.control.send(DisplayFrameComplete(done, self.display_id))
            except GroupError as exc:
                log.error("display %d lost the coordinator: %s", self.display_id, exc)
                self._stop.set()
            self._sink_box.post(done, snapshot)
            incoming.wake()

    def _sink_loop(self) -> None:
        while True:
            try:
                frame, pixels = self._sink_box.pop_any()
            except MailboxClosed:
                return
            try:
                self.sink(self.display_id, frame, PixelBuffer(pixels) if pixels is not None else None)
            except Exception:
                log.exception("display %d sink failed on frame %d", self.display_id, frame)

    def stats(self) -> dict:
        group = self.group.stats() if self.group is not None else {}
        return {
            "display_id": self.display_id,
            "frames_complete": sum(self.completions.values()),
            "completions": dict(self.completions),
            **dict(self.counters),
            "link_bytes_received": group.get("bytes_received", 0),
            "payload_bytes_received": group.get("payload_bytes_received", 0),
        }
