"""Binary checkpoint container for named float64 arrays.

Layout (all integers little-endian):

    magic  b"MSGW"
    u32    format version (currently 1)
    u32    section count
    per section:
        u16    name length, then UTF-8 name
        u32    rank, then rank x u32 dims
        f64 x prod(dims) C-order data

Writes are deterministic: identical section mappings produce identical
bytes. Loads are strict; trailing bytes, short files, or a wrong magic
each fail with a distinct error.
"""
from __future__ import annotations

import math
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"MSGW"
VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


def save_checkpoint(path: str | Path, sections: Mapping[str, np.ndarray]) -> None:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<II", VERSION, len(sections))
    for name, arr in sections.items():
        # tobytes() emits C order for any layout; ascontiguousarray would
        # promote 0-d scalars to 1-d
        data = np.asarray(arr, dtype="<f8")
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise CheckpointError(f"section name too long: {name!r}")
        buf += struct.pack("<H", len(raw_name))
        buf += raw_name
        buf += struct.pack("<I", data.ndim)
        buf += struct.pack(f"<{data.ndim}I", *data.shape)
        buf += data.tobytes()
    Path(path).write_bytes(bytes(buf))


class _Reader:
    def __init__(self, blob: bytes, source: str):
        self.blob = blob
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointTruncatedError(
                f"{self.source}: truncated checkpoint "
                f"(needed {self.pos + n} bytes, file has {len(self.blob)})"
            )
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    r = _Reader(path.read_bytes(), str(path))
    magic = r.take(4)
    if magic != MAGIC:
        raise CheckpointMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    version, count = struct.unpack("<II", r.take(8))
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: unsupported version {version}")
    sections: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", r.take(2))
        name = r.take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", r.take(4))
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        n = math.prod(dims)
        data = np.frombuffer(r.take(8 * n), dtype="<f8").reshape(dims)
        if name in sections:
            raise CheckpointError(f"{path}: duplicate section {name!r}")
        sections[name] = data.astype(np.float64)
    if r.pos != len(r.blob):
        raise CheckpointError(f"{path}: {len(r.blob) - r.pos} trailing bytes")
    return sections
