"""TCP connections bridged to mailboxes, and groups of them formed by handshake.

Each connection owns two workers: a sender draining its outgoing mailbox onto
the socket and a receiver decoding frames into a shared incoming mailbox.
Tiles are posted under their frame id, everything else under CONTROL_FRAME.
A ``Received(member, None)`` item marks a member's end of stream.
"""
from __future__ import annotations

import logging
import socket
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable

from .mailbox import CONTROL_FRAME, MailboxClosed, TimestampedMailbox
from .protocol import (
    AckStatus,
    Message,
    ProtocolError,
    Register,
    RegisterAck,
    Role,
    Tile,
    encode,
    read_message,
    write_message,
)

log = logging.getLogger(__name__)

HANDSHAKE_TIMEOUT = 30.0


class GroupError(Exception):
    pass


class HandshakeError(GroupError):
    def __init__(self, message: str, status: AckStatus | None = None):
        super().__init__(message)
        self.status = status


class ConnectionLost(GroupError):
    pass


class GroupClosed(GroupError):
    pass


class LinkShaper:
    """Caps one node's outgoing bandwidth, shared by all of its connections.

    Used to emulate per-node NICs when every role runs on one loopback host.
    """

    def __init__(self, megabits_per_second: float):
        if megabits_per_second <= 0:
            raise ValueError("bandwidth must be positive")
        self.bytes_per_second = megabits_per_second * 1e6 / 8
        self._lock = threading.Lock()
        self._free_at = 0.0

    def consume(self, nbytes: int) -> None:
        with self._lock:
            now = time.monotonic()
            start = max(now, self._free_at)
            self._free_at = start + nbytes / self.bytes_per_second
            delay = self._free_at - now
        if delay > 0:
            time.sleep(delay)


def make_shaper(megabits_per_second: float | None) -> LinkShaper | None:
    return LinkShaper(megabits_per_second) if megabits_per_second else None


@dataclass(frozen=True)
class Received:
    member: int
    message: Message | None


def frame_key(msg: Message) -> int:
    return msg.header.frame_id if isinstance(msg, Tile) else CONTROL_FRAME


def configure_socket(sock: socket.socket) -> None:
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)


def open_connection(
    host: str, port: int, timeout: float = HANDSHAKE_TIMEOUT, stop: threading.Event | None = None
) -> socket.socket:
    """Connect, retrying while the peer is not yet listening."""
    deadline = time.monotonic() + timeout
    while True:
        if stop is not None and stop.is_set():
            raise GroupClosed(f"connect to {host}:{port} interrupted")
        try:
            sock = socket.create_connection((host, port), timeout=max(0.1, deadline - time.monotonic()))
        except (ConnectionRefusedError, ConnectionResetError, socket.timeout) as exc:
            if time.monotonic() >= deadline:
                raise GroupError(f"cannot connect to {host}:{port}: {exc}") from None
            time.sleep(0.05)
            continue
        sock.settimeout(None)
        configure_socket(sock)
        return sock


def listen(host: str = "127.0.0.1", port: int = 0, backlog: int = 128) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
    except OSError as exc:
        sock.close()
        raise GroupError(f"cannot bind {host}:{port}: {exc}") from None
    sock.listen(backlog)
    return sock


class Connection:
    """One socket with a send worker and a receive worker."""

    def __init__(
        self,
        sock: socket.socket,
        incoming: TimestampedMailbox,
        member: int,
        on_done: Callable[[Connection], None] | None = None,
        name: str = "",
        shaper: LinkShaper | None = None,
    ):
        self.sock = sock
        self.shaper = shaper
        self.incoming = incoming
        self.member = member
        self.name = name or f"conn{member}"
        self.outgoing = TimestampedMailbox()
        self.error: BaseException | None = None
        self.bytes_sent = 0
        self.bytes_received = 0
        self.messages_sent = 0
        self.messages_received = 0
        self.payload_bytes_sent = 0
        self.payload_bytes_received = 0
        self._on_done = on_done
        self._sender = threading.Thread(target=self._send_loop, name=f"{self.name}-send", daemon=True)
        self._receiver = threading.Thread(target=self._recv_loop, name=f"{self.name}-recv", daemon=True)
        self._closed = False

    def start(self) -> Connection:
        self._sender.start()
        self._receiver.start()
        return self

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def alive(self) -> bool:
        return self._receiver.is_alive() or self._sender.is_alive()

    def send(self, msg: Message) -> None:
        if self.error is not None:
            raise ConnectionLost(f"{self.name}: {self.error}")
        try:
            self.outgoing.post(frame_key(msg), msg)
        except MailboxClosed:
            raise ConnectionLost(f"{self.name}: connection closed") from None

    def _send_loop(self):
        try:
            while True:
                try:
                    _, msg = self.outgoing.pop_any()
                except MailboxClosed:
                    break
                data = encode(msg)
                if self.shaper is not None:
                    self.shaper.consume(len(data))
                self.sock.sendall(data)
                self.bytes_sent += len(data)
                self.messages_sent += 1
                if isinstance(msg, Tile):
                    self.payload_bytes_sent += len(msg.payload)
            try:
                self.sock.shutdown(socket.SHUT_WR)
            except OSError:
                pass
        except (OSError, ProtocolError) as exc:
            self._fail(exc)

    def _recv_loop(self):
        try:
            while True:
                got = read_message(self.sock)
                if got is None:
                    break
                msg, nbytes = got
                self.bytes_received += nbytes
                self.messages_received += 1
                if isinstance(msg, Tile):
                    self.payload_bytes_received += len(msg.payload)
                self.incoming.post(frame_key(msg), Received(self.member, msg))
        except MailboxClosed:
            pass
        except (OSError, ProtocolError) as exc:
            if not self._closed:
                self._fail(exc)
        finally:
            try:
                self.incoming.post(CONTROL_FRAME, Received(self.member, None))
            except MailboxClosed:
                pass
            if self._on_done is not None:
                self._on_done(self)

    def _fail(self, exc: BaseException):
        if self.error is None and not self._closed:
            log.warning("%s failed: %s", self.name, exc)
            self.error = exc
        self.outgoing.close()
        self._shutdown()

    def _shutdown(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass

    def close(self, timeout: float = 5.0) -> None:
        """Flush queued sends, then tear down both workers and the socket."""
        self.outgoing.close()
        if self._sender.ident is not None:
            self._sender.join(timeout)
        self._closed = True
        self._shutdown()
        if self._receiver.ident is not None:
            self._receiver.join(timeout)
        self.sock.close()

    def abort(self) -> None:
        self._closed = True
        self.outgoing.close()
        self._shutdown()

    def join(self, timeout: float | None = None) -> None:
        for t in (self._sender, self._receiver):
            if t.ident is not None:
                t.join(timeout)


class SocketGroup:
    """A set of connections sharing one incoming mailbox.

    Member indices are stable: endpoint order for connecting groups, peer rank
    for accepting groups.
    """

    def __init__(
        self,
        session_token: int,
        expected_peers: int,
        incoming: TimestampedMailbox | None = None,
        shaper: LinkShaper | None = None,
    ):
        self.session_token = session_token
        self.shaper = shaper
        self.expected_peers = expected_peers
        self.incoming = incoming if incoming is not None else TimestampedMailbox()
        self.members: dict[int, Connection] = {}
        self._lock = threading.Lock()
        self._done: set[int] = set()
        self._complete = False

    def __len__(self):
        return len(self.members)

    @property
    def ready(self) -> bool:
        return self._complete

    @property
    def failed(self) -> bool:
        return any(c.failed for c in self.members.values())

    @property
    def error(self) -> BaseException | None:
        for c in self.members.values():
            if c.error is not None:
                return c.error
        return None

    def _add(self, member: int, sock: socket.socket, name: str) -> Connection:
        conn = Connection(sock, self.incoming, member, on_done=self._member_done, name=name, shaper=self.shaper)
        with self._lock:
            self.members[member] = conn
        conn.start()
        return conn

    def _seal(self):
        with self._lock:
            self._complete = True
            self._maybe_finish()

    def _member_done(self, conn: Connection):
        with self._lock:
            self._done.add(conn.member)
            self._maybe_finish()

    def _maybe_finish(self):
        if self._complete and self._done >= set(self.members):
            self.incoming.close()

    def send_to(self, member: int, msg: Message) -> None:
        try:
            conn = self.members[member]
        except KeyError:
            raise GroupError(f"no member {member}") from None
        conn.send(msg)

    def broadcast(self, msg: Message) -> None:
        for member in sorted(self.members):
            self.send_to(member, msg)

    def close(self, timeout: float = 5.0) -> None:
        for conn in list(self.members.values()):
            conn.close(timeout)
        self._seal()
        self.incoming.close()

    def stats(self) -> dict[str, int]:
        keys = ("bytes_sent", "bytes_received", "messages_sent", "messages_received",
                "payload_bytes_sent", "payload_bytes_received")
        return {k: sum(getattr(c, k) for c in self.members.values()) for k in keys}


def _handshake(sock: socket.socket, register: Register, timeout: float) -> None:
    sock.settimeout(timeout)
    try:
        write_message(sock, register)
        got = read_message(sock)
    except socket.timeout:
        raise HandshakeError("handshake timed out") from None
    except (OSError, ProtocolError) as exc:
        raise HandshakeError(f"handshake failed: {exc}") from None
    finally:
        sock.settimeout(None)
    if got is None:
        raise HandshakeError("peer closed during handshake")
    ack = got[0]
    if not isinstance(ack, RegisterAck):
        raise HandshakeError(f"expected RegisterAck, got {type(ack).__name__}")
    if ack.status != AckStatus.OK:
        raise HandshakeError(f"registration rejected: {ack.status.name}", ack.status)


def connect_group(
    endpoints: Iterable[tuple[str, int]],
    token: int,
    peer_rank: int,
    peer_count: int,
    *,
    role: Role = Role.CLIENT,
    timeout: float = HANDSHAKE_TIMEOUT,
    incoming: TimestampedMailbox | None = None,
    shaper: LinkShaper | None = None,
    stop: threading.Event | None = None,
) -> SocketGroup:
    """Register with every endpoint; returns once all of them acknowledged."""
    endpoints = list(endpoints)
    group = SocketGroup(token, len(endpoints), incoming, shaper)
    deadline = time.monotonic() + timeout
    register = Register(token, peer_rank, peer_count, role)
    try:
        for i, (host, port) in enumerate(endpoints):
            remaining = max(0.1, deadline - time.monotonic())
            sock = open_connection(host, port, remaining, stop)
            try:
                _handshake(sock, register, max(0.1, deadline - time.monotonic()))
            except BaseException:
                sock.close()
                raise
            group._add(i, sock, f"{host}:{port}")
    except BaseException:
        group.close(timeout=1.0)
        raise
    group._seal()
    return group


def accept_group(
    listener: socket.socket | int,
    token: int,
    expected_peers: int | None = None,
    *,
    timeout: float | None = HANDSHAKE_TIMEOUT,
    stop: threading.Event | None = None,
    incoming: TimestampedMailbox | None = None,
    role: Role | None = None,
    shaper: LinkShaper | None = None,
) -> SocketGroup:
    """Accept registrations until ``expected_peers`` distinct ranks joined.

    With ``expected_peers=None`` the count is taken from the first valid
    Register.  ``role`` restricts which peer role may join.  Each peer is
    acknowledged (and its workers started) as soon as it registers.
    """
    own_listener = isinstance(listener, int)
    lsock = listen("0.0.0.0", listener) if own_listener else listener
    deadline = None if timeout is None else time.monotonic() + timeout
    group: SocketGroup | None = None
    holding = TimestampedMailbox() if incoming is None else incoming
    try:
        lsock.settimeout(0.1)
        while group is None or len(group) < group.expected_peers:
            if stop is not None and stop.is_set():
                raise GroupClosed("accept interrupted")
            if deadline is not None and time.monotonic() > deadline:
                raise HandshakeError("timed out waiting for peers")
            try:
                sock, addr = lsock.accept()
            except socket.timeout:
                continue
            except OSError as exc:
                raise GroupClosed(f"listener closed: {exc}") from None
            configure_socket(sock)
            sock.settimeout(HANDSHAKE_TIMEOUT if timeout is None else timeout)
            try:
                got = read_message(sock)
            except (OSError, ProtocolError) as exc:
                log.warning("dropping %s: %s", addr, exc)
                sock.close()
                continue
            msg = got[0] if got else None
            if not isinstance(msg, Register):
                log.warning("dropping %s: expected Register, got %r", addr, msg)
                sock.close()
                continue
            count = expected_peers if expected_peers is not None else msg.peer_count
            if group is not None:
                count = group.expected_peers
            status = AckStatus.OK
            if msg.session_token != token:
                status = AckStatus.BAD_TOKEN
            elif role is not None and msg.role != role:
                status = AckStatus.BAD_TOKEN
            elif msg.peer_count != count:
                status = AckStatus.PEER_COUNT_MISMATCH
            elif not 0 <= msg.peer_rank < count:
                status = AckStatus.PEER_COUNT_MISMATCH
            elif group is not None and msg.peer_rank in group.members:
                status = AckStatus.DUPLICATE_RANK
            try:
                write_message(sock, RegisterAck(status))
            except OSError:
                sock.close()
                continue
            if status != AckStatus.OK:
                log.warning("rejected registration from %s: %s", addr, status.name)
                sock.close()
                continue
            sock.settimeout(None)
            if group is None:
                group = SocketGroup(token, count, holding, shaper)
            group._add(msg.peer_rank, sock, f"peer{msg.peer_rank}")
    except BaseException:
        if group is not None:
            group.close(timeout=1.0)
        raise
    finally:
        if own_listener:
            lsock.close()
    group._seal()
    return group
