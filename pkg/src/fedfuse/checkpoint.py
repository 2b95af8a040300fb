"""Binary checkpoint format for :class:`~fedfuse.tensor.ParameterSet`.

Layout (all integers little-endian)::

    b"FEDF"                    magic
    u16                        format version
    u32                        header length in bytes
    <header>                   UTF-8 JSON: {arch_hash, base_id, tensors: [{name, shape}]}
    <payload>                  float32 LE data of each tensor, in header order

The header is canonical JSON (sorted keys, no whitespace) and tensors are
listed in lexicographic name order, so equal sets always serialize to
equal bytes.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointFormatError
from .tensor import ParameterSet

MAGIC = b"FEDF"
VERSION = 1
_LE_F32 = np.dtype("<f4")


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def dumps(params: ParameterSet) -> bytes:
    header = {
        "arch_hash": params.arch_hash,
        "base_id": params.base_id,
        "tensors": [{"name": name, "shape": list(params[name].shape)} for name in params],
    }
    head = canonical_json(header)
    parts = [MAGIC, struct.pack("<HI", VERSION, len(head)), head]
    parts.extend(np.ascontiguousarray(params[name], dtype=_LE_F32).tobytes() for name in params)
    return b"".join(parts)


def loads(blob: bytes) -> ParameterSet:
    if len(blob) < 10 or blob[:4] != MAGIC:
        raise CheckpointFormatError("not a FEDF checkpoint (bad magic)")
    version, head_len = struct.unpack_from("<HI", blob, 4)
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    start = 10
    try:
        header = json.loads(blob[start:start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"corrupt header: {exc}") from None
    offset = start + head_len
    entries = {}
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 4 * count
        if end > len(blob):
            raise CheckpointFormatError(f"truncated payload for tensor {spec['name']!r}")
        entries[spec["name"]] = np.frombuffer(blob, dtype=_LE_F32, count=count, offset=offset).reshape(shape)
        offset = end
    if offset != len(blob):
        raise CheckpointFormatError(f"{len(blob) - offset} trailing bytes after payload")
    return ParameterSet(entries, header["base_id"], header["arch_hash"])


def save(params: ParameterSet, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(params))
    os.replace(tmp, path)
    return path


def load(path) -> ParameterSet:
    return loads(Path(path).read_bytes())
