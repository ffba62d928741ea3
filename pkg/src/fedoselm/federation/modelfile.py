"""Model state file: a superset of ``.osuv`` that also keeps beta, P and merge history.

Layout (little-endian)::

    magic      4s   b"OSMD"
    version    u16
    threshold  f64  NaN when unset
    own        u32 length + .osuv bytes   this device's own contribution
    beta       f64[n_hidden * n_output]
    P          f64[n_hidden * n_hidden]
    n_peers    u16
    per peer:  u16 length + UTF-8 id, 32-byte sha256 digest, u32 length + .osuv bytes

Topology, seed, ridge and sample count live in the embedded ``.osuv`` header
(the model's totals are recovered by adding the merged peers back).
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from ..anomaly import AnomalyDetector
from ..elm import init_model
from ..errors import FormatError
from ..merge import combine_all
from .client import EdgeNode, MergedPeer
from .wire import MAGIC as OSUV_MAGIC, deserialize, serialize

MAGIC = b"OSMD"
VERSION = 1
_F64 = np.dtype("<f8")


def dumps(node: EdgeNode) -> bytes:
    det = node.detector
    model = det.model
    if model.p is None:
        raise FormatError("only models with OS-ELM state can be saved")
    own = node.own_payload()
    threshold = math.nan if det.threshold is None else float(det.threshold)
    parts = [
        struct.pack("<4sHd", MAGIC, VERSION, threshold),
        struct.pack("<I", len(own)), own,
        model.beta.astype(_F64).tobytes(),
        model.p.astype(_F64).tobytes(),
        struct.pack("<H", len(node.merged)),
    ]
    for peer_id, peer in sorted(node.merged.items()):
        pid = peer_id.encode("utf-8")
        blob = serialize(peer.intermediates)
        parts += [struct.pack("<H", len(pid)), pid, peer.digest, struct.pack("<I", len(blob)), blob]
    return b"".join(parts)


def loads(data: bytes, device_id: str = "local") -> EdgeNode:
    data = bytes(data)
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"truncated model file while reading {what}: need {pos + n} bytes, have {len(data)}")
        out = data[pos:pos + n]
        pos += n
        return out

    magic, version, threshold = struct.unpack("<4sHd", take(14, "header"))
    if magic != MAGIC:
        raise FormatError(f"not a model file (magic {magic!r})")
    if version != VERSION:
        raise FormatError(f"unsupported model file version {version}")
    (own_len,) = struct.unpack("<I", take(4, "own length"))
    own = deserialize(take(own_len, "own intermediates"))
    topo = own.topology
    nh, m = topo.n_hidden, topo.n_output
    beta = np.frombuffer(take(8 * nh * m, "beta"), dtype=_F64).reshape(nh, m).astype(np.float64)
    p = np.frombuffer(take(8 * nh * nh, "P"), dtype=_F64).reshape(nh, nh).astype(np.float64)
    (n_peers,) = struct.unpack("<H", take(2, "peer count"))
    merged = {}
    for _ in range(n_peers):
        (id_len,) = struct.unpack("<H", take(2, "peer id length"))
        peer_id = take(id_len, "peer id").decode("utf-8")
        d = take(32, "peer digest")
        (blob_len,) = struct.unpack("<I", take(4, "peer length"))
        merged[peer_id] = MergedPeer(d, deserialize(take(blob_len, "peer intermediates")))
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes in model file")

    total = combine_all([own, *(peer.intermediates for peer in merged.values())])
    model = init_model(topo).with_state(beta, p, ridge=total.ridge, sample_count=total.sample_count)
    det = AnomalyDetector(model, threshold=None if math.isnan(threshold) else threshold)
    return EdgeNode(device_id, det, merged=merged)


def save(path, node: EdgeNode) -> None:
    Path(path).write_bytes(dumps(node))


def load(path, device_id: str | None = None) -> EdgeNode:
    path = Path(path)
    return loads(path.read_bytes(), device_id or path.stem)


def read_contribution(path) -> bytes:
    """``.osuv`` bytes from either an ``.osuv`` file or a model file."""
    data = Path(path).read_bytes()
    if data[:4] == OSUV_MAGIC:
        deserialize(data)
        return data
    if data[:4] == MAGIC:
        loads(data)
        (own_len,) = struct.unpack_from("<I", data, 14)
        return data[18:18 + own_len]
    raise FormatError(f"{path}: neither an .osuv nor a model file")
