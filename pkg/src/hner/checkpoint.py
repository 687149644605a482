"""Binary checkpoint format.

Layout::

    b"HNERCKPT"            8 bytes magic
    version                u32 little-endian (= 1)
    header_length          u64 little-endian
    header                 UTF-8 JSON: {"tensors": [{"name", "shape", "offset"}],
                                        "configs": {...}, "metadata": {...}}
    data                   little-endian float32 payloads

Tensor offsets are byte offsets from the start of the data section. Tensors
are packed densely in header order, so each payload occupies
``prod(shape) * 4`` bytes and the data section ends exactly at end of file.
Tensors are float64 in memory; saving rounds them to float32.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"HNERCKPT"
VERSION = 1
_PREAMBLE = struct.Struct("<8sIQ")
_F32 = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    configs: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    version: int = VERSION


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    entries = []
    payloads = []
    offset = 0
    for name, arr in ckpt.tensors.items():
        a = np.ascontiguousarray(np.asarray(arr), dtype=_F32)
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        payloads.append(a.tobytes())
        offset += a.nbytes
    header = json.dumps(
        {"tensors": entries, "configs": ckpt.configs, "metadata": ckpt.metadata},
        sort_keys=False,
    ).encode("utf-8")
    return b"".join([_PREAMBLE.pack(MAGIC, VERSION, len(header)), header, *payloads])


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(encode_checkpoint(ckpt))


def decode_checkpoint(blob: bytes) -> Checkpoint:
    if len(blob) < _PREAMBLE.size:
        raise CheckpointError("file too short for checkpoint preamble")
    magic, version, header_len = _PREAMBLE.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = _PREAMBLE.size
    if start + header_len > len(blob):
        raise CheckpointError("truncated header")
    try:
        header = json.loads(blob[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable header: {e}") from None
    data = memoryview(blob)[start + header_len :]

    tensors: dict[str, np.ndarray] = {}
    expected = 0
    for entry in header.get("tensors", []):
        try:
            name, shape, offset = entry["name"], [int(s) for s in entry["shape"]], int(entry["offset"])
        except (KeyError, TypeError, ValueError):
            raise CheckpointError(f"malformed tensor entry {entry!r}") from None
        if name in tensors:
            raise CheckpointError(f"duplicate tensor {name!r}")
        if any(s < 0 for s in shape):
            raise CheckpointError(f"negative dimension in {name!r}")
        if offset != expected:
            raise CheckpointError(
                f"tensor {name!r} at offset {offset}, expected {expected} (dense packing)"
            )
        nbytes = math.prod(shape) * _F32.itemsize
        if offset + nbytes > len(data):
            raise CheckpointError(f"tensor {name!r} runs past end of file")
        arr = np.frombuffer(data[offset : offset + nbytes], dtype=_F32).reshape(shape)
        tensors[name] = arr.astype(np.float64)
        expected = offset + nbytes
    if expected != len(data):
        raise CheckpointError(f"{len(data) - expected} unaccounted bytes after tensor data")
    return Checkpoint(tensors, header.get("configs", {}), header.get("metadata", {}), version)


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


def check_names(expected, found: Mapping) -> None:
    """Raise if ``found`` does not hold exactly the ``expected`` tensor names."""
    expected, got = set(expected), set(found)
    if expected != got:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        raise CheckpointError(f"tensor name mismatch; missing: {missing}, extra: {extra}")
