"""Binary model files.

Layout (little-endian)::

    b"LKCNN\\0"                 magic, 6 bytes
    u16                        format version
    u32                        descriptor length L
    L bytes                    UTF-8 JSON architecture descriptor
    u64                        parameter count P
    P * f32 (or f64)           parameters, blocks in descriptor order, C order;
                               the descriptor's "dtype" names the width
    u32                        CRC-32 of every preceding byte
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .model import ReferenceCnn, ShapeError, param_shapes

MAGIC = b"LKCNN\0"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def _descriptor(model: ReferenceCnn) -> dict:
    return {
        "input_shape": list(model.input_shape),
        "channels": list(model.channels),
        "class_names": list(model.class_names),
        "blocks": [[name, list(p.shape)] for name, p in model.params.items()],
        "dtype": str(np.dtype(model.dtype)),
    }


_WIRE = {"float32": "<f4", "float64": "<f8"}


def dumps(model: ReferenceCnn) -> bytes:
    """Serialize at the model's own precision, so the round trip is bit-exact."""
    d = _descriptor(model)
    if d["dtype"] not in _WIRE:
        raise ModelFormatError(f"cannot store {d['dtype']} parameters")
    desc = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    payload = np.concatenate([p.ravel() for p in model.params.values()]).astype(_WIRE[d["dtype"]])
    body = b"".join([
        MAGIC,
        struct.pack("<HI", VERSION, len(desc)),
        desc,
        struct.pack("<Q", payload.size),
        payload.tobytes(),
    ])
    return body + struct.pack("<I", zlib.crc32(body))


def loads(data: bytes) -> ReferenceCnn:
    if len(data) < len(MAGIC) + 6 + 8 + 4 or not data.startswith(MAGIC):
        raise ModelFormatError("not a model file (bad magic or truncated)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFormatError("checksum mismatch (file truncated or corrupted)")
    pos = len(MAGIC)
    version, desc_len = struct.unpack_from("<HI", body, pos)
    if version != VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    pos += 6
    try:
        desc = json.loads(body[pos:pos + desc_len].decode())
        input_shape = tuple(desc["input_shape"])
        channels = tuple(desc["channels"])
        class_names = tuple(desc["class_names"])
        blocks = [(name, tuple(shape)) for name, shape in desc["blocks"]]
        dtype = desc["dtype"]
        wire = _WIRE[dtype]
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"bad architecture descriptor: {exc}") from exc
    pos += desc_len
    (count,) = struct.unpack_from("<Q", body, pos)
    pos += 8
    expected = param_shapes(input_shape, channels, len(class_names))
    if blocks != list(expected.items()):
        raise ModelFormatError("parameter blocks disagree with the architecture descriptor")
    if count != sum(int(np.prod(s)) for s in expected.values()):
        raise ModelFormatError(f"payload holds {count} values, architecture needs "
                               f"{sum(int(np.prod(s)) for s in expected.values())}")
    width = np.dtype(wire).itemsize
    if len(body) - pos != width * count:
        raise ModelFormatError("payload length does not match the parameter count")
    flat = np.frombuffer(body, dtype=wire, count=count, offset=pos).astype(dtype)
    params = {}
    off = 0
    for name, shape in expected.items():
        size = int(np.prod(shape))
        params[name] = flat[off:off + size].reshape(shape).copy()
        off += size
    try:
        return ReferenceCnn(input_shape, channels, class_names, params, dtype)
    except ShapeError as exc:
        raise ModelFormatError(str(exc)) from exc


def save_model(model: ReferenceCnn, path) -> None:
    Path(path).write_bytes(dumps(model))


def load_model(path) -> ReferenceCnn:
    return loads(Path(path).read_bytes())
