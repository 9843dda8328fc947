"""Binary checkpoints.

Layout (all integers little-endian)::

    b"BCLCKPT1"
    u32  metadata length n
    n    bytes of UTF-8 JSON metadata
    u64  payload length p
    p    bytes of float64 parameters, network by network, (W, b) layer by layer
    u32  CRC-32 of the payload
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import IntegrityError
from ..nn import Network, NetworkSpec, Parameters
from ..ppo import ActorCritic

MAGIC = b"BCLCKPT1"
VERSION = 1


@dataclass
class Checkpoint:
    model: object
    metadata: dict


def _networks(model):
    if isinstance(model, ActorCritic):
        return "actor_critic", [model.policy, model.value]
    if isinstance(model, Network):
        return "network", [model]
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def payload_size(specs):
    """Bytes of parameter payload for the given network specs."""
    return 8 * sum(int(np.prod(s)) for spec in specs for pair in spec.shapes() for s in pair)


def save_checkpoint(model, metadata, path):
    kind, nets = _networks(model)
    meta = dict(metadata or {})
    meta.update(model_kind=kind, specs=[n.spec.to_dict() for n in nets], version=VERSION)
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                       for n in nets for a in n.params.arrays())
    blob = b"".join([MAGIC, struct.pack("<I", len(meta_bytes)), meta_bytes,
                     struct.pack("<Q", len(payload)), payload,
                     struct.pack("<I", zlib.crc32(payload))])
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)
    return path


def _take(buf, pos, n, what):
    if pos + n > len(buf):
        raise IntegrityError(f"checkpoint truncated while reading {what}")
    return buf[pos:pos + n], pos + n


def load_checkpoint(path):
    buf = Path(path).read_bytes()
    magic, pos = _take(buf, 0, 8, "magic")
    if magic != MAGIC:
        raise IntegrityError("not a checkpoint (bad magic)")
    raw, pos = _take(buf, pos, 4, "metadata length")
    meta_bytes, pos = _take(buf, pos, struct.unpack("<I", raw)[0], "metadata")
    try:
        meta = json.loads(meta_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"unreadable metadata: {exc}") from exc
    raw, pos = _take(buf, pos, 8, "payload length")
    plen = struct.unpack("<Q", raw)[0]
    payload, pos = _take(buf, pos, plen, "payload")
    raw, pos = _take(buf, pos, 4, "checksum")
    if pos != len(buf):
        raise IntegrityError("trailing bytes after checksum")
    if struct.unpack("<I", raw)[0] != zlib.crc32(payload):
        raise IntegrityError("payload CRC mismatch")
    try:
        specs = [NetworkSpec.from_dict(d) for d in meta["specs"]]
        kind = meta["model_kind"]
    except (KeyError, TypeError, ValueError) as exc:
        raise IntegrityError(f"metadata missing network description: {exc}") from exc
    if payload_size(specs) != plen:
        raise IntegrityError(f"payload has {plen} bytes, specs need {payload_size(specs)}")
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    nets, off = [], 0
    for spec in specs:
        arrays = []
        for shape in (s for pair in spec.shapes() for s in pair):
            n = int(np.prod(shape))
            arrays.append(flat[off:off + n].reshape(shape).copy())
            off += n
        nets.append(Network(spec, Parameters.from_arrays(arrays)))
    if kind == "actor_critic" and len(nets) == 2:
        model = ActorCritic(*nets)
    elif kind == "network" and len(nets) == 1:
        model = nets[0]
    else:
        raise IntegrityError(f"unknown model kind {kind!r}")
    return Checkpoint(model, meta)
