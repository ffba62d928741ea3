"""Byte layouts: the ``.osuv`` intermediates blob, the message envelope, framing.

All integers and floats are little-endian.

``.osuv`` (one serialized :class:`~fedoselm.merge.Intermediates`)::

    magic      4s   b"OSUV"
    version    u16
    init_seed  u64
    n_input    u32
    n_hidden   u32
    n_output   u32
    activation u8
    ridge      f64  accumulated ridge
    samples    u64
    U          f64[n_hidden * n_hidden]  row-major
    V          f64[n_hidden * n_output]  row-major

Envelope (one :class:`FederationMessage`)::

    kind       u8
    device_id  u16 length + UTF-8
    payload    u32 length + bytes   (length 0 == no payload)
    error_text u16 length + UTF-8   (length 0 == no error text)

On a stream every envelope is preceded by its u32 length.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..elm import Activation, Topology
from ..errors import ConfigurationError, FormatError
from ..merge import Intermediates

MAGIC = b"OSUV"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHQIIIBdQ")
assert HEADER.size == 4 + 2 + 8 + 12 + 1 + 8 + 8

MAX_FRAME = 1 << 28
_F64 = np.dtype("<f8")


def payload_size(n_hidden: int, n_output: int) -> int:
    return HEADER.size + 8 * (n_hidden * n_hidden + n_hidden * n_output)


def serialize(ir: Intermediates) -> bytes:
    topo = ir.topology
    head = HEADER.pack(
        MAGIC, FORMAT_VERSION, topo.init_seed, topo.n_input, topo.n_hidden, topo.n_output,
        int(topo.activation), float(ir.ridge), int(ir.sample_count),
    )
    return head + ir.u.astype(_F64).tobytes() + ir.v.astype(_F64).tobytes()


def deserialize(data: bytes) -> Intermediates:
    data = bytes(data)
    if len(data) < HEADER.size:
        raise FormatError(
            f"truncated intermediates: expected at least {HEADER.size} header bytes, "
            f"got {len(data)}"
        )
    magic, version, seed, n, nh, m, act, ridge, samples = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported intermediates format version {version}")
    expected = payload_size(nh, m)
    if len(data) != expected:
        raise FormatError(f"intermediates length mismatch: expected {expected} bytes, got {len(data)}")
    try:
        topo = Topology(n, nh, m, Activation(act), seed)
    except (ValueError, ConfigurationError) as exc:
        raise FormatError(f"invalid topology in header: {exc}") from None
    body = np.frombuffer(data, dtype=_F64, offset=HEADER.size)
    u = body[: nh * nh].reshape(nh, nh).astype(np.float64)
    v = body[nh * nh:].reshape(nh, m).astype(np.float64)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v)) and np.isfinite(ridge)):
        raise FormatError("intermediates contain NaN or Inf")
    return Intermediates(u, v, topo, samples, ridge)


def digest(payload: bytes) -> bytes:
    return hashlib.sha256(payload).digest()


def topology_digest(topo: Topology) -> str:
    key = f"{topo.n_input}:{topo.n_hidden}:{topo.n_output}:{int(topo.activation)}:{topo.init_seed}"
    return hashlib.sha256(key.encode()).hexdigest()[:16]


class Kind(enum.IntEnum):
    REGISTER = 0
    UPLOAD = 1
    LIST = 2
    DOWNLOAD = 3
    ACK = 4
    ERROR = 5


@dataclass(frozen=True)
class FederationMessage:
    kind: Kind
    device_id: str = ""
    payload: Optional[bytes] = None
    error_text: Optional[str] = None


def encode_message(msg: FederationMessage) -> bytes:
    dev = msg.device_id.encode("utf-8")
    err = (msg.error_text or "").encode("utf-8")
    payload = msg.payload or b""
    if len(dev) > 0xFFFF or len(err) > 0xFFFF:
        raise FormatError("device_id or error_text longer than 65535 bytes")
    if len(payload) > MAX_FRAME:
        raise FormatError(f"payload of {len(payload)} bytes exceeds frame limit")
    return b"".join([
        struct.pack("<BH", int(msg.kind), len(dev)), dev,
        struct.pack("<I", len(payload)), payload,
        struct.pack("<H", len(err)), err,
    ])


def decode_message(data: bytes) -> FederationMessage:
    data = bytes(data)
    pos = 0

    def take(nbytes: int, what: str) -> bytes:
        nonlocal pos
        if pos + nbytes > len(data):
            raise FormatError(f"truncated message while reading {what}: need {pos + nbytes} bytes, have {len(data)}")
        chunk = data[pos:pos + nbytes]
        pos += nbytes
        return chunk

    kind_raw, dev_len = struct.unpack("<BH", take(3, "header"))
    try:
        kind = Kind(kind_raw)
    except ValueError:
        raise FormatError(f"unknown message kind {kind_raw}") from None
    try:
        device_id = take(dev_len, "device_id").decode("utf-8")
        (plen,) = struct.unpack("<I", take(4, "payload length"))
        payload = take(plen, "payload")
        (elen,) = struct.unpack("<H", take(2, "error length"))
        error_text = take(elen, "error_text").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"invalid UTF-8 in message: {exc}") from None
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after message")
    return FederationMessage(kind, device_id, payload or None, error_text or None)


def frame(data: bytes) -> bytes:
    return struct.pack("<I", len(data)) + data


def _recv_exact(sock, nbytes: int) -> bytes:
    buf = bytearray()
    while len(buf) < nbytes:
        chunk = sock.recv(nbytes - len(buf))
        if not chunk:
            raise EOFError(f"connection closed after {len(buf)} of {nbytes} bytes")
        buf.extend(chunk)
    return bytes(buf)


def read_frame(sock) -> Optional[bytes]:
    """Next framed message from ``sock``; ``None`` on a clean close."""
    first = sock.recv(4)
    if not first:
        return None
    head = first + (_recv_exact(sock, 4 - len(first)) if len(first) < 4 else b"")
    (length,) = struct.unpack("<I", head)
    if length > MAX_FRAME:
        raise FormatError(f"frame of {length} bytes exceeds limit {MAX_FRAME}")
    return _recv_exact(sock, length)


def write_frame(sock, data: bytes) -> None:
    sock.sendall(frame(data))
