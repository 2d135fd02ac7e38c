"""Binary wire protocol: framing, payload codecs, and socket helpers.

Every message is a fixed 21-byte header followed by a payload::

    magic "STG1" | msg_type u8 | corr_id u64 LE | payload_len u64 LE

The correlation id ties responses back to pipelined requests; it is chosen
by the requesting side and echoed verbatim. All integers are little-endian.
Boxes travel as ``u8 ndims`` then per-dimension ``u64 lower, u64 upper``
(coordinates on the wire are unsigned). Variable names are ``u8 len`` plus
UTF-8 bytes.

Decoders are strict: truncated or trailing bytes raise :class:`ProtocolError`.
A clean EOF on a message boundary raises :class:`ConnectionClosed` instead so
servers can tell peers hanging up from peers sending garbage.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .directory import ObjectDescriptor
from .errors import ConnectionClosed, ProtocolError
from .geometry import NDBox, volume
from .hashutil import fnv1a64, mix64
from .tier import ChunkHandle

MAGIC = b"STG1"
HEADER = struct.Struct("<4sBQQ")
HEADER_SIZE = HEADER.size  # 21

MSG_PUT = 1
MSG_PUT_ACK = 2
MSG_GET = 3
MSG_GET_RESP = 4
MSG_NOTIFY = 5
MSG_NOTIFY_ACK = 6
MSG_STAT = 7
MSG_STAT_RESP = 8
MSG_BARRIER = 9
MSG_ERR = 255

MSG_NAMES = {
    MSG_PUT: "PUT",
    MSG_PUT_ACK: "PUT_ACK",
    MSG_GET: "GET",
    MSG_GET_RESP: "GET_RESP",
    MSG_NOTIFY: "NOTIFY",
    MSG_NOTIFY_ACK: "NOTIFY_ACK",
    MSG_STAT: "STAT",
    MSG_STAT_RESP: "STAT_RESP",
    MSG_BARRIER: "BARRIER",
    MSG_ERR: "ERR",
}

ERR_STAGING_FULL = 1
ERR_NOT_OWNER = 2
ERR_TIMEOUT = 3
ERR_ESIZE = 4
ERR_SHUTDOWN = 5
ERR_BAD_REQUEST = 6
ERR_INTERNAL = 7

ERR_NAMES = {
    ERR_STAGING_FULL: "STAGING_FULL",
    ERR_NOT_OWNER: "NOT_OWNER",
    ERR_TIMEOUT: "TIMEOUT",
    ERR_ESIZE: "ESIZE",
    ERR_SHUTDOWN: "SHUTDOWN",
    ERR_BAD_REQUEST: "BAD_REQUEST",
    ERR_INTERNAL: "INTERNAL",
}

ELEMENT_SIZES = (1, 2, 4, 8)

#: Upper bound on a single payload; a guard against corrupt headers, not a
#: resource budget (real puts are bounded by tier capacity long before this).
MAX_PAYLOAD = 1 << 31

_U64_MAX = (1 << 64) - 1
_U32_MAX = (1 << 32) - 1


@dataclass(frozen=True)
class Message:
    msg_type: int
    corr_id: int
    payload: bytes


@dataclass(frozen=True)
class PutRequest:
    var: str
    version: int
    element_size: int
    box: NDBox
    data: memoryview  # volume(box) * element_size bytes, row-major


@dataclass(frozen=True)
class GetRequest:
    var: str
    version: int
    element_size: int
    box: NDBox
    timeout_ms: int  # 0 = fail-fast


@dataclass(frozen=True)
class StatReply:
    used_bytes: int
    capacity_bytes: int
    chunk_count: int
    cumulative_read_bytes: int
    cumulative_write_bytes: int
    descriptor_count: int
    pending_gets: int
    notify_failures: int


_STAT = struct.Struct("<8Q")
_ERR_CODE = struct.Struct("<H")


# --------------------------------------------------------------------------
# primitive codecs


def _check_u32(value: int, what: str) -> int:
    if not 0 <= value <= _U32_MAX:
        raise ValueError(f"{what} {value} out of u32 range")
    return value


def encode_var(var: str) -> bytes:
    raw = var.encode("utf-8")
    if not raw:
        raise ValueError("variable name must be non-empty")
    if len(raw) > 255:
        raise ValueError("variable name exceeds 255 UTF-8 bytes")
    return bytes((len(raw),)) + raw


def encode_box(box: NDBox) -> bytes:
    if any(c < 0 for c in box.lower):
        raise ValueError(f"box {box} has negative coordinates; "
                         "wire coordinates are unsigned")
    parts = [bytes((box.ndims,))]
    for lo, up in zip(box.lower, box.upper):
        parts.append(struct.pack("<QQ", lo, up))
    return b"".join(parts)


class _Cursor:
    """Strict forward reader over a payload buffer."""

    __slots__ = ("buf", "pos")

    def __init__(self, payload):
        self.buf = memoryview(payload)
        self.pos = 0

    def take(self, n: int) -> memoryview:
        end = self.pos + n
        if end > len(self.buf):
            raise ProtocolError("truncated payload")
        piece = self.buf[self.pos:end]
        self.pos = end
        return piece

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def var(self) -> str:
        n = self.u8()
        if n == 0:
            raise ProtocolError("empty variable name")
        try:
            return bytes(self.take(n)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"variable name is not UTF-8: {exc}") from None

    def box(self) -> NDBox:
        ndims = self.u8()
        if not 1 <= ndims <= 3:
            raise ProtocolError(f"box ndims {ndims} not in 1..3")
        lower, upper = [], []
        for _ in range(ndims):
            lower.append(self.u64())
            upper.append(self.u64())
        try:
            return NDBox(tuple(lower), tuple(upper))
        except ValueError as exc:
            raise ProtocolError(f"malformed box: {exc}") from None

    def esize(self) -> int:
        value = self.u32()
        if value not in ELEMENT_SIZES:
            raise ProtocolError(f"element_size {value} not in {ELEMENT_SIZES}")
        return value

    def finish(self):
        if self.pos != len(self.buf):
            raise ProtocolError(
                f"{len(self.buf) - self.pos} trailing bytes after payload")


# --------------------------------------------------------------------------
# payload codecs


def encode_put(var: str, version: int, element_size: int, box: NDBox,
               data) -> list[bytes]:
    """Return payload parts; ``data`` is kept separate to avoid copying it."""
    if element_size not in ELEMENT_SIZES:
        raise ValueError(f"element_size {element_size} not in {ELEMENT_SIZES}")
    expect = volume(box) * element_size
    if len(data) != expect:
        raise ValueError(f"data is {len(data)} bytes, box needs {expect}")
    prefix = b"".join((encode_var(var),
                       struct.pack("<II", _check_u32(version, "version"),
                                   element_size),
                       encode_box(box)))
    return [prefix, data]


def decode_put(payload) -> PutRequest:
    cur = _Cursor(payload)
    var = cur.var()
    version = cur.u32()
    element_size = cur.esize()
    box = cur.box()
    data = cur.take(volume(box) * element_size)
    cur.finish()
    return PutRequest(var, version, element_size, box, data)


def encode_get(var: str, version: int, element_size: int, box: NDBox,
               timeout_ms: int) -> bytes:
    if element_size not in ELEMENT_SIZES:
        raise ValueError(f"element_size {element_size} not in {ELEMENT_SIZES}")
    return b"".join((encode_var(var),
                     struct.pack("<II", _check_u32(version, "version"),
                                 element_size),
                     encode_box(box),
                     struct.pack("<I", _check_u32(timeout_ms, "timeout_ms"))))


def decode_get(payload) -> GetRequest:
    cur = _Cursor(payload)
    var = cur.var()
    version = cur.u32()
    element_size = cur.esize()
    box = cur.box()
    timeout_ms = cur.u32()
    cur.finish()
    return GetRequest(var, version, element_size, box, timeout_ms)


def encode_descriptor(desc: ObjectDescriptor) -> bytes:
    """Canonical descriptor bytes, shared by NOTIFY and the journal."""
    return b"".join((encode_var(desc.var),
                     struct.pack("<II", _check_u32(desc.version, "version"),
                                 desc.element_size),
                     encode_box(desc.box),
                     struct.pack("<I", _check_u32(desc.owner, "owner")),
                     struct.pack("<QQQ", desc.handle.offset,
                                 desc.handle.length,
                                 desc.handle.generation)))


def decode_descriptor(payload) -> ObjectDescriptor:
    cur = _Cursor(payload)
    desc = _descriptor_from(cur)
    cur.finish()
    return desc


def _descriptor_from(cur: _Cursor) -> ObjectDescriptor:
    var = cur.var()
    version = cur.u32()
    element_size = cur.esize()
    box = cur.box()
    owner = cur.u32()
    offset, length, generation = (cur.u64(), cur.u64(), cur.u64())
    try:
        return ObjectDescriptor(var, version, box, element_size, owner,
                                ChunkHandle(offset, length, generation))
    except ValueError as exc:
        raise ProtocolError(f"malformed descriptor: {exc}") from None


def encode_err(code: int, message: str) -> bytes:
    return _ERR_CODE.pack(code) + message.encode("utf-8")


def decode_err(payload) -> tuple[int, str]:
    if len(payload) < _ERR_CODE.size:
        raise ProtocolError("truncated error payload")
    code = _ERR_CODE.unpack_from(payload)[0]
    try:
        message = bytes(memoryview(payload)[2:]).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError(f"error message is not UTF-8: {exc}") from None
    return code, message


def encode_stat_reply(stat: StatReply) -> bytes:
    return _STAT.pack(stat.used_bytes, stat.capacity_bytes, stat.chunk_count,
                      stat.cumulative_read_bytes, stat.cumulative_write_bytes,
                      stat.descriptor_count, stat.pending_gets,
                      stat.notify_failures)


def decode_stat_reply(payload) -> StatReply:
    if len(payload) != _STAT.size:
        raise ProtocolError(f"stat payload is {len(payload)} bytes, "
                            f"expected {_STAT.size}")
    return StatReply(*_STAT.unpack(payload))


def descriptor_key(var: str, version: int, element_size: int,
                   box: NDBox) -> bytes:
    """16-byte chunk-table key derived from the descriptor identity."""
    canon = b"".join((encode_var(var),
                      struct.pack("<II", version, element_size),
                      encode_box(box)))
    h1 = fnv1a64(canon)
    return struct.pack("<QQ", h1, mix64(h1))


# --------------------------------------------------------------------------
# framing and socket helpers


def encode_header(msg_type: int, corr_id: int, payload_len: int) -> bytes:
    if not 0 <= corr_id <= _U64_MAX:
        raise ValueError(f"corr_id {corr_id} out of u64 range")
    if payload_len > MAX_PAYLOAD:
        raise ValueError(f"payload of {payload_len} bytes exceeds "
                         f"MAX_PAYLOAD ({MAX_PAYLOAD})")
    return HEADER.pack(MAGIC, msg_type, corr_id, payload_len)


def encode_message(msg_type: int, corr_id: int, payload: bytes = b"") -> bytes:
    return encode_header(msg_type, corr_id, len(payload)) + payload


def send_message(sock, msg_type: int, corr_id: int, *parts):
    """Frame and send; the largest part is sent without concatenation."""
    total = sum(len(p) for p in parts)
    header = encode_header(msg_type, corr_id, total)
    if parts and len(parts[-1]) >= (1 << 16):
        sock.sendall(b"".join((header, *(bytes(p) for p in parts[:-1]))))
        sock.sendall(parts[-1])
    else:
        sock.sendall(b"".join((header, *(bytes(p) for p in parts))))


def recv_exact(sock, n: int) -> bytes:
    """Read exactly ``n`` bytes.

    EOF before the first byte raises :class:`ConnectionClosed` (the peer hung
    up cleanly); EOF partway through raises :class:`ProtocolError`.
    """
    if n == 0:
        return b""
    buf = bytearray(n)
    view = memoryview(buf)
    got = 0
    while got < n:
        read = sock.recv_into(view[got:])
        if read == 0:
            if got == 0:
                raise ConnectionClosed("EOF")
            raise ProtocolError(f"EOF after {got} of {n} bytes")
        got += read
    return bytes(buf)


def read_message(sock) -> Message:
    """Read one framed message; clean EOF between messages → ConnectionClosed."""
    header = recv_exact(sock, HEADER_SIZE)
    magic, msg_type, corr_id, payload_len = HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if payload_len > MAX_PAYLOAD:
        raise ProtocolError(f"payload_len {payload_len} exceeds MAX_PAYLOAD")
    try:
        payload = recv_exact(sock, payload_len)
    except ConnectionClosed:
        raise ProtocolError("EOF instead of payload") from None
    return Message(msg_type, corr_id, payload)
