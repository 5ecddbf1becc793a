"""Wire messages and their byte layout.

Every frame is ``[u32 total_length][u8 tag][body]`` where ``total_length``
counts the tag byte and the body.  Integers are little-endian u32 unless
noted; strings are ``[u16 length][utf-8 bytes]``.  See PROTOCOL.md.
"""
from __future__ import annotations

import socket
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Union

from .wall_config import Mode, Rect


class ProtocolError(Exception):
    """Malformed or truncated frame; the connection carrying it must be aborted."""


class Tag(IntEnum):
    QUERY_INFO = 1
    INFO_REPLY = 2
    REGISTER = 3
    REGISTER_ACK = 4
    TILE = 5
    DISPLAY_FRAME_COMPLETE = 6
    NEXT_FRAME_TOKEN = 7
    SHUTDOWN = 8


class Codec(IntEnum):
    RAW_RGBA8 = 0
    JPEG = 1


class Role(IntEnum):
    CLIENT = 0
    DISPLAY = 1
    DISPATCHER = 2


class AckStatus(IntEnum):
    OK = 0
    BAD_TOKEN = 1
    DUPLICATE_RANK = 2
    PEER_COUNT_MISMATCH = 3
    GROUP_FULL = 4


MAX_PAYLOAD = 2**31
_MODE_CODES = {Mode.DISPATCHER: 0, Mode.DIRECT: 1}
_MODES = {v: k for k, v in _MODE_CODES.items()}

_LEN = struct.Struct("<I")
_TILE_HEADER = struct.Struct("<IIIIIBI")  # frame_id x y w h codec payload_len
TILE_HEADER_SIZE = _TILE_HEADER.size


@dataclass(frozen=True)
class TileHeader:
    frame_id: int
    x: int
    y: int
    width: int
    height: int
    codec: Codec
    payload_len: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ProtocolError(f"tile extent {self.width}x{self.height} must be positive")
        if self.codec == Codec.RAW_RGBA8 and self.payload_len != self.width * self.height * 4:
            raise ProtocolError("raw tile payload_len must equal width*height*4")

    @property
    def rect(self) -> Rect:
        return Rect(self.x, self.y, self.width, self.height)


@dataclass(frozen=True)
class DisplayEntry:
    display_id: int
    host: str
    port: int
    region: Rect


@dataclass(frozen=True)
class QueryInfo:
    pass


@dataclass(frozen=True)
class InfoReply:
    virtual_width: int
    virtual_height: int
    mode: Mode
    session_token: int
    frames_in_flight: int = 1
    displays: tuple[DisplayEntry, ...] = ()
    dispatcher_host: str = ""
    dispatcher_port: int = 0


@dataclass(frozen=True)
class Register:
    session_token: int
    peer_rank: int
    peer_count: int
    role: Role = Role.CLIENT


@dataclass(frozen=True)
class RegisterAck:
    status: AckStatus = AckStatus.OK


@dataclass(frozen=True)
class Tile:
    header: TileHeader
    payload: bytes = field(repr=False)

    @property
    def frame_id(self) -> int:
        return self.header.frame_id


@dataclass(frozen=True)
class DisplayFrameComplete:
    frame_id: int
    display_id: int


@dataclass(frozen=True)
class NextFrameToken:
    frame_id: int


@dataclass(frozen=True)
class Shutdown:
    pass


Message = Union[
    QueryInfo, InfoReply, Register, RegisterAck, Tile, DisplayFrameComplete, NextFrameToken, Shutdown
]


def make_tile(frame_id: int, rect: Rect, codec: Codec, payload: bytes) -> Tile:
    return Tile(TileHeader(frame_id, rect.x, rect.y, rect.width, rect.height, Codec(codec), len(payload)), payload)


def _str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ProtocolError("string too long")
    return struct.pack("<H", len(raw)) + raw


def _body(msg: Message) -> tuple[Tag, bytes]:
    if isinstance(msg, Tile):
        h = msg.header
        if len(msg.payload) >= MAX_PAYLOAD:
            raise ProtocolError(f"payload of {len(msg.payload)} bytes exceeds 2^31")
        if h.payload_len != len(msg.payload):
            raise ProtocolError("header payload_len does not match payload")
        head = _TILE_HEADER.pack(h.frame_id, h.x, h.y, h.width, h.height, h.codec, h.payload_len)
        return Tag.TILE, head + bytes(msg.payload)
    if isinstance(msg, QueryInfo):
        return Tag.QUERY_INFO, b""
    if isinstance(msg, InfoReply):
        parts = [
            struct.pack(
                "<IIBQI",
                msg.virtual_width,
                msg.virtual_height,
                _MODE_CODES[Mode(msg.mode)],
                msg.session_token,
                msg.frames_in_flight,
            ),
            _str(msg.dispatcher_host),
            _LEN.pack(msg.dispatcher_port),
            _LEN.pack(len(msg.displays)),
        ]
        for d in msg.displays:
            parts.append(_LEN.pack(d.display_id))
            parts.append(_str(d.host))
            r = d.region
            parts.append(struct.pack("<IIIII", d.port, r.x, r.y, r.width, r.height))
        return Tag.INFO_REPLY, b"".join(parts)
    if isinstance(msg, Register):
        return Tag.REGISTER, struct.pack("<QIIB", msg.session_token, msg.peer_rank, msg.peer_count, msg.role)
    if isinstance(msg, RegisterAck):
        return Tag.REGISTER_ACK, struct.pack("<B", msg.status)
    if isinstance(msg, DisplayFrameComplete):
        return Tag.DISPLAY_FRAME_COMPLETE, struct.pack("<II", msg.frame_id, msg.display_id)
    if isinstance(msg, NextFrameToken):
        return Tag.NEXT_FRAME_TOKEN, _LEN.pack(msg.frame_id)
    if isinstance(msg, Shutdown):
        return Tag.SHUTDOWN, b""
    raise TypeError(f"not a protocol message: {msg!r}")


def encode(msg: Message) -> bytes:
    tag, body = _body(msg)
    try:
        return _LEN.pack(1 + len(body)) + bytes([tag]) + body
    except struct.error as exc:
        raise ProtocolError(str(exc)) from None


class _Reader:
    def __init__(self, buf: memoryview):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.buf):
            raise ProtocolError("truncated frame")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: struct.Struct | str):
        s = fmt if isinstance(fmt, struct.Struct) else struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def string(self) -> str:
        (n,) = self.unpack("<H")
        try:
            return bytes(self.take(n)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"bad string: {exc}") from None


def peek_tile_header(frame: bytes | memoryview) -> TileHeader:
    """Read a Tile's header from an encoded frame without touching its payload."""
    mv = memoryview(frame)
    if len(mv) < 5 + TILE_HEADER_SIZE:
        raise ProtocolError("truncated frame")
    if mv[4] != Tag.TILE:
        raise ProtocolError(f"not a tile frame (tag {mv[4]})")
    fields = _TILE_HEADER.unpack_from(mv, 5)
    return _tile_header(fields)


def _tile_header(fields) -> TileHeader:
    frame_id, x, y, w, h, codec, plen = fields
    try:
        codec = Codec(codec)
    except ValueError:
        raise ProtocolError(f"unknown codec {codec}") from None
    return TileHeader(frame_id, x, y, w, h, codec, plen)


def decode_body(tag: int, body: bytes | memoryview) -> Message:
    r = _Reader(memoryview(body))
    if tag == Tag.TILE:
        header = _tile_header(r.unpack(_TILE_HEADER))
        payload = bytes(r.take(header.payload_len))
        msg: Message = Tile(header, payload)
    elif tag == Tag.QUERY_INFO:
        msg = QueryInfo()
    elif tag == Tag.INFO_REPLY:
        vw, vh, mode, token, fif = r.unpack("<IIBQI")
        if mode not in _MODES:
            raise ProtocolError(f"unknown mode {mode}")
        dhost = r.string()
        (dport,) = r.unpack(_LEN)
        (count,) = r.unpack(_LEN)
        entries = []
        for _ in range(count):
            (did,) = r.unpack(_LEN)
            host = r.string()
            port, x, y, w, h = r.unpack("<IIIII")
            entries.append(DisplayEntry(did, host, port, Rect(x, y, w, h)))
        msg = InfoReply(vw, vh, _MODES[mode], token, fif, tuple(entries), dhost, dport)
    elif tag == Tag.REGISTER:
        token, rank, count, role = r.unpack("<QIIB")
        try:
            msg = Register(token, rank, count, Role(role))
        except ValueError:
            raise ProtocolError(f"unknown role {role}") from None
    elif tag == Tag.REGISTER_ACK:
        (status,) = r.unpack("<B")
        try:
            msg = RegisterAck(AckStatus(status))
        except ValueError:
            raise ProtocolError(f"unknown ack status {status}") from None
    elif tag == Tag.DISPLAY_FRAME_COMPLETE:
        msg = DisplayFrameComplete(*r.unpack("<II"))
    elif tag == Tag.NEXT_FRAME_TOKEN:
        msg = NextFrameToken(*r.unpack(_LEN))
    elif tag == Tag.SHUTDOWN:
        msg = Shutdown()
    else:
        raise ProtocolError(f"unknown tag 0x{tag:02X}")
    if r.pos != len(r.buf):
        raise ProtocolError("length mismatch: trailing bytes in frame")
    return msg


def decode(frame: bytes | memoryview) -> Message:
    mv = memoryview(frame)
    if len(mv) < 5:
        raise ProtocolError("truncated frame")
    (total,) = _LEN.unpack_from(mv, 0)
    if total < 1:
        raise ProtocolError("length mismatch: empty frame")
    if len(mv) < 4 + total:
        raise ProtocolError("truncated frame")
    if len(mv) > 4 + total:
        raise ProtocolError("length mismatch: bytes beyond declared total_length")
    return decode_body(mv[4], mv[5 : 4 + total])


# largest frame we are willing to allocate for
MAX_FRAME = MAX_PAYLOAD + 64


def recv_exact(sock: socket.socket, n: int) -> bytearray | None:
    """Read exactly n bytes; None on clean EOF before the first byte."""
    buf = bytearray(n)
    view = memoryview(buf)
    got = 0
    while got < n:
        k = sock.recv_into(view[got:], n - got)
        if k == 0:
            if got == 0:
                return None
            raise ProtocolError("truncated frame: connection closed mid-frame")
        got += k
    return buf


def read_message(sock: socket.socket) -> tuple[Message, int] | None:
    """Read one frame from a socket. Returns (message, bytes_read) or None on EOF."""
    prefix = recv_exact(sock, 4)
    if prefix is None:
        return None
    (total,) = _LEN.unpack(prefix)
    if total < 1 or total > MAX_FRAME:
        raise ProtocolError(f"length mismatch: implausible total_length {total}")
    rest = recv_exact(sock, total)
    if rest is None:
        raise ProtocolError("truncated frame: connection closed mid-frame")
    return decode_body(rest[0], memoryview(rest)[1:]), 4 + total


def write_message(sock: socket.socket, msg: Message) -> int:
    data = encode(msg)
    sock.sendall(data)
    return len(data)
