"""Client library: query the wall, join the session, wait for frame tokens and
stream RGBA tiles.

The same program works against a dispatcher-mode or a direct-mode wall; only
where the tiles go differs.  The ``dw2_*`` functions at the bottom are the
flat, plain-data surface (see docs/client_api.md).
"""
from __future__ import annotations

import logging
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .codec import PixelBuffer, compress
from .mailbox import MailboxClosed, TimestampedMailbox
from .protocol import (
    AckStatus,
    DisplayEntry,
    InfoReply,
    NextFrameToken,
    QueryInfo,
    Register,
    RegisterAck,
    Role,
    Shutdown,
    make_tile,
    read_message,
    write_message,
)
from .socket_group import (
    HANDSHAKE_TIMEOUT,
    Connection,
    GroupError,
    HandshakeError,
    LinkShaper,
    SocketGroup,
    connect_group,
    make_shaper,
    open_connection,
)
from .wall_config import Mode, Rect

log = logging.getLogger(__name__)


class SessionClosed(Exception):
    """The session ended (service shut down, connection lost, or disconnect called)."""


class FrameNotAdmitted(Exception):
    pass


@dataclass(frozen=True)
class WallInfo:
    virtual_width: int
    virtual_height: int
    mode: Mode
    session_token: int
    frames_in_flight: int
    displays: tuple[DisplayEntry, ...] = ()
    dispatcher: tuple[str, int] | None = None
    coordinator: tuple[str, int] = ("127.0.0.1", 0)

    @property
    def rect(self) -> Rect:
        return Rect(0, 0, self.virtual_width, self.virtual_height)

    def route(self, tile: Rect) -> list[int]:
        """Indices into ``displays`` of the entries whose region overlaps ``tile``."""
        return [i for i, d in enumerate(self.displays) if d.region.intersect(tile) is not None]


def _info_from_reply(reply: InfoReply, host: str, port: int) -> WallInfo:
    dispatcher = None
    if reply.mode == Mode.DISPATCHER:
        dispatcher = (reply.dispatcher_host or host, reply.dispatcher_port)
    return WallInfo(
        reply.virtual_width,
        reply.virtual_height,
        reply.mode,
        reply.session_token,
        reply.frames_in_flight,
        reply.displays,
        dispatcher,
        (host, port),
    )


def query_info(host: str, port: int, timeout: float = HANDSHAKE_TIMEOUT) -> WallInfo:
    """Ask the coordinator for the wall's size, mode, token and display directory."""
    try:
        sock = open_connection(host, port, timeout)
    except GroupError as exc:
        raise ConnectionError(str(exc)) from None
    try:
        sock.settimeout(timeout)
        write_message(sock, QueryInfo())
        got = read_message(sock)
    except OSError as exc:
        raise ConnectionError(f"query to {host}:{port} failed: {exc}") from None
    finally:
        sock.close()
    if got is None or not isinstance(got[0], InfoReply):
        raise ConnectionError(f"malformed reply from {host}:{port}")
    return _info_from_reply(got[0], host, port)


class ClientSession:
    """One peer's membership in a rendering session.

    ``send_rgba`` returns as soon as the tile is queued; a worker pool
    compresses and sends it.  ``begin_frame`` is the only blocking call.
    """

    def __init__(
        self,
        info: WallInfo,
        peer_rank: int = 0,
        peer_count: int = 1,
        quality: int | str = 75,
        workers: int = 2,
        max_pending_tiles: int = 64,
        timeout: float = HANDSHAKE_TIMEOUT,
        link_mbps: float | None = None,
    ):
        self.info = info
        self.shaper: LinkShaper | None = make_shaper(link_mbps)
        self.peer_rank = peer_rank
        self.peer_count = peer_count
        self.quality = quality
        self.frame_id = -1
        self.admitted = -1
        self.counters: Counter[str] = Counter()
        self.token_times: dict[int, float] = {}
        self._error: BaseException | None = None
        self._closed = False
        self._max_pending = max_pending_tiles
        self._pending = 0
        self._pending_cond = threading.Condition()
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix=f"client{peer_rank}")
        self._counter_lock = threading.Lock()

        if info.mode == Mode.DIRECT:
            endpoints = [(d.host, d.port) for d in info.displays]
        else:
            endpoints = [info.dispatcher]
        self.group: SocketGroup = connect_group(
            endpoints, info.session_token, peer_rank, peer_count, timeout=timeout, shaper=self.shaper
        )
        try:
            self._tokens = TimestampedMailbox()
            self.control = self._connect_control(timeout)
        except BaseException:
            self.group.close(timeout=1.0)
            self._pool.shutdown(wait=False)
            raise

    def _connect_control(self, timeout: float) -> Connection:
        host, port = self.info.coordinator
        sock = open_connection(host, port, timeout)
        sock.settimeout(timeout)
        try:
            write_message(sock, Register(self.info.session_token, self.peer_rank, self.peer_count, Role.CLIENT))
            got = read_message(sock)
        except BaseException:
            sock.close()
            raise
        sock.settimeout(None)
        if got is None or not isinstance(got[0], RegisterAck):
            sock.close()
            raise HandshakeError("coordinator did not acknowledge registration")
        if got[0].status != AckStatus.OK:
            sock.close()
            raise HandshakeError(f"coordinator rejected registration: {got[0].status.name}", got[0].status)
        return Connection(sock, self._tokens, 0, name=f"client{self.peer_rank}-control", shaper=self.shaper).start()

    # frames

    def _pump_token(self, timeout: float | None) -> None:
        try:
            _, rcv = self._tokens.pop_any(timeout)
        except MailboxClosed:
            raise SessionClosed("session closed") from None
        msg = rcv.message
        if isinstance(msg, NextFrameToken):
            self.admitted = max(self.admitted, msg.frame_id)
            self.token_times[msg.frame_id] = time.monotonic()
        elif msg is None or isinstance(msg, Shutdown):
            self._tokens.close()
            raise SessionClosed("service ended the session")

    def _wait_admitted(self, frame_id: int, timeout: float | None) -> None:
        deadline = None if timeout is None else time.monotonic() + timeout
        while self.admitted < frame_id:
            remaining = None if deadline is None else deadline - time.monotonic()
            if remaining is not None and remaining <= 0:
                raise TimeoutError(f"frame {frame_id} not admitted")
            self._pump_token(remaining)

    def begin_frame(self, timeout: float | None = None) -> int:
        """Block until the service admits the next frame; returns its id."""
        self._check()
        self._wait_admitted(self.frame_id + 1, timeout)
        self.frame_id += 1
        return self.frame_id

    def frame_complete(self, frame_id: int) -> bool:
        """True once every display showed ``frame_id`` (its successor token arrived)."""
        return self.admitted >= frame_id + self.info.frames_in_flight

    def wait_complete(self, frame_id: int | None = None, timeout: float | None = None) -> None:
        """Block until ``frame_id`` (default: the current frame) is complete on the wall."""
        frame_id = self.frame_id if frame_id is None else frame_id
        self._wait_admitted(frame_id + self.info.frames_in_flight, timeout)

    def send_rgba(self, frame_id: int, pixels: PixelBuffer | np.ndarray, origin: tuple[int, int]) -> None:
        """Queue a tile whose top-left corner is ``origin`` in virtual coordinates."""
        self._check()
        if isinstance(pixels, np.ndarray):
            pixels = PixelBuffer(pixels)
        if not 0 <= frame_id <= self.frame_id or self.frame_complete(frame_id):
            raise FrameNotAdmitted(f"frame {frame_id} is not open (current {self.frame_id})")
        rect = Rect(origin[0], origin[1], pixels.width, pixels.height)
        if rect.width < 1 or rect.height < 1 or rect.intersect(self.info.rect) != rect:
            raise ValueError(f"tile {rect} is outside the {self.info.virtual_width}x{self.info.virtual_height} wall")
        if self.info.mode == Mode.DIRECT:
            targets = self.info.route(rect)
            if not targets:
                self.counters["tiles_dropped"] += 1
                return
        else:
            targets = [0]
        with self._pending_cond:
            self._pending_cond.wait_for(lambda: self._pending < self._max_pending)
            self._pending += 1
        try:
            self._pool.submit(self._compress_and_send, frame_id, pixels, rect, targets)
        except BaseException:
            self._task_done()
            raise

    def _task_done(self):
        with self._pending_cond:
            self._pending -= 1
            self._pending_cond.notify_all()

    def _compress_and_send(self, frame_id, pixels, rect, targets):
        try:
            codec, payload = compress(pixels, self.quality)
            tile = make_tile(frame_id, rect, codec, payload)
            for member in targets:
                self.group.send_to(member, tile)
            with self._counter_lock:
                self.counters["tiles_sent"] += len(targets)
                self.counters["payload_bytes_compressed"] += len(payload)
                self.counters["payload_bytes_sent"] += len(payload) * len(targets)
        except BaseException as exc:
            log.error("client %d failed to send tile: %s", self.peer_rank, exc)
            self._error = self._error or exc
        finally:
            self._task_done()

    def flush(self) -> None:
        """Wait until every queued tile was compressed and handed to its socket."""
        with self._pending_cond:
            self._pending_cond.wait_for(lambda: self._pending == 0)
        self._check()

    def _check(self):
        if self._closed:
            raise SessionClosed("session disconnected")
        if self._error is not None:
            raise SessionClosed(f"send failed: {self._error}") from self._error
        if self.group.failed:
            raise SessionClosed(f"connection lost: {self.group.error}")

    def disconnect(self, wait: bool = True, timeout: float | None = 30.0) -> None:
        """Flush pending tiles, optionally wait for the wall to show them, and leave."""
        if self._closed:
            return
        try:
            if wait and self.frame_id >= 0 and self._error is None:
                self.flush()
                self.wait_complete(self.frame_id, timeout)
        except SessionClosed:
            pass
        finally:
            self._closed = True
            self._pool.shutdown(wait=True)
            self.group.close()
            self.control.close()

    def stats(self) -> dict:
        group = self.group.stats()
        return {**dict(self.counters), "link_bytes_sent": group["bytes_sent"]}

    def __enter__(self) -> ClientSession:
        return self

    def __exit__(self, exc_type, *_):
        self.disconnect(wait=exc_type is None)


def connect(info: WallInfo, peer_rank: int = 0, peer_count: int = 1, **kwargs) -> ClientSession:
    return ClientSession(info, peer_rank, peer_count, **kwargs)


# flat surface mirroring the C-style API


def dw2_query_info(host: str, port: int) -> WallInfo:
    return query_info(host, port)


def dw2_connect(info: WallInfo, peer_rank: int, peer_count: int, quality: int = 75) -> ClientSession:
    return connect(info, peer_rank, peer_count, quality=quality)


def dw2_begin_frame(session: ClientSession) -> int:
    return session.begin_frame()


def dw2_send_rgba(session: ClientSession, frame_id: int, x: int, y: int, width: int, height: int, rgba: bytes) -> None:
    session.send_rgba(frame_id, PixelBuffer.from_bytes(rgba, width, height), (x, y))


def dw2_disconnect(session: ClientSession) -> None:
    session.disconnect()
