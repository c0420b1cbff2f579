"""Checkpoint container: JSON header + little-endian raw float buffers.

Layout:
  bytes 0..7    header length L as little-endian uint64
  bytes 8..8+L  UTF-8 JSON: {"version", "meta", "tensors": {name:
                {"shape", "dtype", "offset", "nbytes"}}}
  remainder     concatenated raw buffers; offsets are relative to the end
                of the header
"""

import json
import os
import struct

import numpy as np

from ..errors import TruncationError
from .tensor import Tensor

FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8"}


def dumps(params, meta=None):
    """Serialize a name->Tensor/ndarray dict to bytes."""
    entries = {}
    payload = bytearray()
    for name in sorted(params):
        arr = params[name].data if isinstance(params[name], Tensor) else np.asarray(params[name])
        if arr.dtype not in (np.float32, np.float64):
            raise TypeError(f"checkpoint: {name} has non-float dtype {arr.dtype}")
        raw = np.ascontiguousarray(arr).astype(_DTYPES[arr.dtype.name], copy=False)
        entries[name] = {
            "shape": list(arr.shape),
            "dtype": arr.dtype.name,
            "offset": len(payload),
            "nbytes": raw.nbytes,
        }
        payload += raw.tobytes()
    header = json.dumps(
        {"version": FORMAT_VERSION, "meta": meta or {}, "tensors": entries},
        sort_keys=True).encode("utf-8")
    return struct.pack("<Q", len(header)) + header + bytes(payload)


def loads(blob):
    """Parse checkpoint bytes into ({name: ndarray}, meta)."""
    if len(blob) < 8:
        raise TruncationError("checkpoint: missing length prefix at offset 0")
    (hlen,) = struct.unpack("<Q", blob[:8])
    if len(blob) < 8 + hlen:
        raise TruncationError(f"checkpoint: header truncated at offset {len(blob)}")
    header = json.loads(blob[8:8 + hlen].decode("utf-8"))
    base = 8 + hlen
    out = {}
    for name, ent in header["tensors"].items():
        start = base + ent["offset"]
        stop = start + ent["nbytes"]
        if stop > len(blob):
            raise TruncationError(f"checkpoint: payload for {name} truncated at offset {len(blob)}")
        arr = np.frombuffer(blob[start:stop], dtype=_DTYPES[ent["dtype"]])
        out[name] = arr.reshape(ent["shape"]).astype(ent["dtype"], copy=True)
    return out, header.get("meta", {})


def save(path, params, meta=None):
    """Write a checkpoint atomically (temp file + rename)."""
    blob = dumps(params, meta)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


def load(path):
    with open(path, "rb") as f:
        return loads(f.read())


def load_tensors(path, requires_grad=False):
    arrays, meta = load(path)
    return {k: Tensor(v, requires_grad=requires_grad) for k, v in arrays.items()}, meta
