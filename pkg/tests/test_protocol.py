import socket
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dw2.protocol import (
    AckStatus,
    Codec,
    DisplayEntry,
    DisplayFrameComplete,
    InfoReply,
    NextFrameToken,
    ProtocolError,
    QueryInfo,
    Register,
    RegisterAck,
    Role,
    Shutdown,
    Tag,
    Tile,
    TileHeader,
    decode,
    encode,
    make_tile,
    peek_tile_header,
    read_message,
)
from dw2.wall_config import Mode, Rect

u32 = st.integers(0, 2**32 - 1)
pos32 = st.integers(1, 2**32 - 1)
short_text = st.text(max_size=24)


@st.composite
def tiles(draw):
    if draw(st.booleans()):
        w, h = draw(st.integers(1, 6)), draw(st.integers(1, 6))
        payload = draw(st.binary(min_size=w * h * 4, max_size=w * h * 4))
        codec = Codec.RAW_RGBA8
    else:
        w, h = draw(pos32), draw(pos32)
        payload = draw(st.binary(max_size=64))
        codec = Codec.JPEG
    header = TileHeader(draw(u32), draw(u32), draw(u32), w, h, codec, len(payload))
    return Tile(header, payload)


entries = st.builds(
    DisplayEntry, u32, short_text, u32, st.builds(Rect, u32, u32, pos32, pos32)
)

messages = st.one_of(
    tiles(),
    st.just(QueryInfo()),
    st.builds(
        InfoReply,
        u32,
        u32,
        st.sampled_from(list(Mode)),
        st.integers(0, 2**64 - 1),
        u32,
        st.lists(entries, max_size=4).map(tuple),
        short_text,
        u32,
    ),
    st.builds(Register, st.integers(0, 2**64 - 1), u32, u32, st.sampled_from(list(Role))),
    st.builds(RegisterAck, st.sampled_from(list(AckStatus))),
    st.builds(DisplayFrameComplete, u32, u32),
    st.builds(NextFrameToken, u32),
    st.just(Shutdown()),
)


@settings(max_examples=10_000)
@given(messages)
def test_round_trip(msg):
    frame = encode(msg)
    (total,) = struct.unpack_from("<I", frame)
    assert total == len(frame) - 4
    assert decode(frame) == msg


def test_raw_tile_layout():
    tile = make_tile(7, Rect(1, 2, 1, 1), Codec.RAW_RGBA8, b"\x0a\x0b\x0c\xff")
    frame = encode(tile)
    assert frame == (
        struct.pack("<IB", 30, Tag.TILE) + struct.pack("<IIIIIBI", 7, 1, 2, 1, 1, 0, 4) + b"\x0a\x0b\x0c\xff"
    )
    assert len(frame) == 34


def test_small_message_layouts():
    assert encode(QueryInfo()) == b"\x01\x00\x00\x00\x01"
    assert encode(NextFrameToken(3)) == b"\x05\x00\x00\x00\x07\x03\x00\x00\x00"
    assert encode(RegisterAck(AckStatus.BAD_TOKEN)) == b"\x02\x00\x00\x00\x04\x01"
    assert encode(Register(1, 2, 3, Role.DISPLAY)) == struct.pack("<IBQIIB", 18, 3, 1, 2, 3, 1)


@settings(max_examples=300)
@given(messages, st.data())
def test_truncation_is_detected(msg, data):
    frame = encode(msg)
    cut = data.draw(st.integers(0, len(frame) - 1))
    with pytest.raises(ProtocolError):
        decode(frame[:cut])


def test_trailing_bytes_rejected():
    with pytest.raises(ProtocolError, match="length mismatch"):
        decode(encode(Shutdown()) + b"\x00")
    # declared length larger than the body needs
    with pytest.raises(ProtocolError, match="length mismatch"):
        decode(struct.pack("<IB", 6, Tag.NEXT_FRAME_TOKEN) + b"\x01\x00\x00\x00\x00")


def test_unknown_tag():
    with pytest.raises(ProtocolError, match="unknown tag 0xFF"):
        decode(b"\x01\x00\x00\x00\xff")


def test_raw_payload_length_checked():
    with pytest.raises(ProtocolError):
        TileHeader(0, 0, 0, 2, 2, Codec.RAW_RGBA8, 15)
    with pytest.raises(ProtocolError):
        TileHeader(0, 0, 0, 0, 2, Codec.JPEG, 15)


class HugePayload(bytes):
    def __len__(self):
        return 2**31


def test_oversized_payload_rejected():
    tile = Tile(TileHeader(0, 0, 0, 8, 8, Codec.JPEG, 2**31 - 1), HugePayload())
    with pytest.raises(ProtocolError):
        encode(tile)


def test_peek_header_ignores_payload():
    tile = make_tile(4, Rect(10, 20, 3, 2), Codec.JPEG, b"\xff\xd8 not really a jpeg")
    frame = encode(tile)
    assert peek_tile_header(frame) == tile.header
    # the header is readable even when only the header bytes have arrived
    assert peek_tile_header(frame[: 5 + 25]) == tile.header
    with pytest.raises(ProtocolError):
        peek_tile_header(encode(Shutdown()))


@settings(max_examples=200)
@given(messages, messages)
def test_stream_reader_stops_at_frame_boundary(a, b):
    left, right = socket.socketpair()
    try:
        left.sendall(encode(a) + encode(b))
        left.shutdown(socket.SHUT_WR)
        got_a, n_a = read_message(right)
        got_b, n_b = read_message(right)
        assert (got_a, got_b) == (a, b)
        assert (n_a, n_b) == (len(encode(a)), len(encode(b)))
        assert read_message(right) is None
    finally:
        left.close()
        right.close()


def test_stream_truncated_mid_frame():
    left, right = socket.socketpair()
    try:
        left.sendall(encode(NextFrameToken(9))[:-2])
        left.close()
        with pytest.raises(ProtocolError, match="truncated"):
            read_message(right)
    finally:
        right.close()
