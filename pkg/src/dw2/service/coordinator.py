"""Information server and frame-token issuer.

Answers QueryInfo, tracks registrations of clients, displays and the
dispatcher, and admits clients to new frames: ``frames_in_flight`` tokens are
issued when the client group is complete, then one more each time a frame has
been reported complete by every display.
"""
from __future__ import annotations

import logging
import secrets
import socket
import threading
import time
from collections import defaultdict

from ..mailbox import CONTROL_FRAME, MailboxClosed, TimestampedMailbox
from ..protocol import (
    AckStatus,
    DisplayEntry,
    DisplayFrameComplete,
    InfoReply,
    NextFrameToken,
    QueryInfo,
    Register,
    RegisterAck,
    Role,
    Shutdown,
)
from ..socket_group import Connection, LinkShaper, configure_socket, listen
from ..wall_config import Mode, WallConfig, display_region, virtual_size

log = logging.getLogger(__name__)


class Coordinator:
    def __init__(
        self,
        config: WallConfig,
        listener: socket.socket | None = None,
        token: int | None = None,
        shaper: LinkShaper | None = None,
    ):
        self.config = config
        self.shaper = shaper
        self.token = secrets.randbits(64) if token is None else token
        self.listener = listener or listen(config.coordinator.host, config.coordinator.port)
        self.inbox = TimestampedMailbox()
        self.conns: dict[int, Connection] = {}
        self.roles: dict[int, tuple[Role, int]] = {}
        self.clients: dict[int, int] = {}  # conn id -> peer rank
        self.peer_count: int | None = None
        self.session_started = False
        self.session_start_time: float | None = None
        self.clients_gone: set[int] = set()
        self.completions: dict[int, set[int]] = defaultdict(set)
        self.next_incomplete = 0
        self.highest_token = -1
        self.completion_times: list[float] = []
        self.token_times: dict[int, float] = {}
        self.error: str | None = None
        self._stop = threading.Event()
        self._next_id = 0
        self._threads: list[threading.Thread] = []

    # lifecycle

    def start(self) -> Coordinator:
        for target, name in ((self._accept_loop, "coord-accept"), (self.run, "coord-control")):
            t = threading.Thread(target=target, name=name, daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def join(self, timeout: float | None = None) -> None:
        for t in self._threads:
            t.join(timeout)

    def stop(self) -> None:
        self._stop.set()
        self.inbox.close()

    @property
    def running(self) -> bool:
        return any(t.is_alive() for t in self._threads)

    def _accept_loop(self):
        self.listener.settimeout(0.1)
        while not self._stop.is_set():
            try:
                sock, _ = self.listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            configure_socket(sock)
            cid = self._next_id
            self._next_id += 1
            conn = Connection(sock, self.inbox, cid, name=f"coord-conn{cid}", shaper=self.shaper)
            self.conns[cid] = conn
            try:
                conn.start()
            except RuntimeError:
                break
        self.listener.close()

    def run(self):
        try:
            while True:
                try:
                    _, rcv = self.inbox.pop_any()
                except MailboxClosed:
                    break
                self._handle(rcv.member, rcv.message)
        finally:
            self._stop.set()
            for conn in list(self.conns.values()):
                conn.close(timeout=2.0)

    # protocol

    def info_reply(self) -> InfoReply:
        vw, vh = virtual_size(self.config)
        displays: tuple[DisplayEntry, ...] = ()
        dhost, dport = "", 0
        if self.config.mode == Mode.DIRECT:
            displays = tuple(
                DisplayEntry(d.display_id, d.host, d.port, display_region(self.config, d.display_id))
                for d in self.config.displays
            )
        else:
            ep = self.config.dispatcher_endpoint
            dhost, dport = ep.host, ep.port
        return InfoReply(vw, vh, self.config.mode, self.token, self.config.frames_in_flight, displays, dhost, dport)

    def _handle(self, cid: int, msg):
        conn = self.conns.get(cid)
        if msg is None:
            self._disconnected(cid)
        elif isinstance(msg, QueryInfo):
            conn.send(self.info_reply())
        elif isinstance(msg, Register):
            conn.send(RegisterAck(self._register(cid, msg)))
            if msg.role == Role.CLIENT and self._ready_to_start():
                self._start_session()
        elif isinstance(msg, DisplayFrameComplete):
            self._display_complete(msg)
        else:
            log.warning("coordinator ignoring %s from conn %d", type(msg).__name__, cid)

    def _register(self, cid: int, msg: Register) -> AckStatus:
        if msg.session_token != self.token:
            return AckStatus.BAD_TOKEN
        if msg.role == Role.CLIENT:
            if self.session_started:
                return AckStatus.GROUP_FULL
            if self.peer_count is None:
                self.peer_count = msg.peer_count
            if msg.peer_count != self.peer_count or not 0 <= msg.peer_rank < msg.peer_count:
                return AckStatus.PEER_COUNT_MISMATCH
            if msg.peer_rank in self.clients.values():
                return AckStatus.DUPLICATE_RANK
            self.clients[cid] = msg.peer_rank
        elif msg.role == Role.DISPLAY:
            if not 0 <= msg.peer_rank < self.config.num_displays:
                return AckStatus.PEER_COUNT_MISMATCH
            if any(r == (Role.DISPLAY, msg.peer_rank) for r in self.roles.values()):
                return AckStatus.DUPLICATE_RANK
        self.roles[cid] = (msg.role, msg.peer_rank)
        return AckStatus.OK

    def _ready_to_start(self) -> bool:
        return not self.session_started and self.peer_count is not None and len(self.clients) == self.peer_count

    def _start_session(self):
        self.session_started = True
        self.session_start_time = time.monotonic()
        log.info("session started with %d client(s)", self.peer_count)
        for f in range(self.config.frames_in_flight):
            self._issue_token(f)

    def _issue_token(self, frame_id: int):
        self.highest_token = frame_id
        self.token_times[frame_id] = time.monotonic()
        for cid in self.clients:
            if cid not in self.clients_gone:
                self.conns[cid].send(NextFrameToken(frame_id))

    def _display_complete(self, msg: DisplayFrameComplete):
        if msg.frame_id < self.next_incomplete:
            log.warning("late completion of frame %d from display %d", msg.frame_id, msg.display_id)
            return
        self.completions[msg.frame_id].add(msg.display_id)
        n = self.config.num_displays
        while len(self.completions.get(self.next_incomplete, ())) == n:
            del self.completions[self.next_incomplete]
            self.completion_times.append(time.monotonic())
            self.next_incomplete += 1
            if self.session_started:
                self._issue_token(self.next_incomplete - 1 + self.config.frames_in_flight)

    def _service_conns(self):
        return [cid for cid, (role, _) in self.roles.items() if role != Role.CLIENT]

    def _disconnected(self, cid: int):
        if cid in self.clients:
            self.clients_gone.add(cid)
            if len(self.clients_gone) == len(self.clients) and self.session_started:
                log.info("all clients left after %d complete frames; shutting down", self.next_incomplete)
                self._shutdown()
        elif cid in self.roles:
            role, rank = self.roles[cid]
            if not self._stop.is_set():
                self.error = f"{role.name.lower()} {rank} control connection lost"
                log.error("%s; shutting down", self.error)
                for other in self.clients:
                    self._try_send(other, Shutdown())
                self._shutdown()

    def _try_send(self, cid: int, msg):
        try:
            self.conns[cid].send(msg)
        except Exception:
            pass

    def _shutdown(self):
        for cid in self._service_conns():
            self._try_send(cid, Shutdown())
        self.stop()

    # accounting

    def stats(self) -> dict:
        link = {k: sum(getattr(c, k) for c in self.conns.values()) for k in ("bytes_sent", "bytes_received")}
        return {
            "frames_complete": self.next_incomplete,
            "session_start": self.session_start_time,
            "completion_times": list(self.completion_times),
            "token_times": dict(self.token_times),
            "highest_token": self.highest_token,
            "link_bytes": link["bytes_sent"] + link["bytes_received"],
            "error": self.error,
        }
