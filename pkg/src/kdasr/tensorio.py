"""Binary container for named float32 tensors.

Layout (all integers little-endian)::

    b"DFKD" | version u32 | header_len u64 | header (UTF-8 JSON)
    then per tensor, sorted by name:
    name_len u64 | name (UTF-8) | rank u64 | dims u64 * rank | float32 data

Used for model checkpoints and for frame sidecars of data manifests.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import CorruptCheckpoint, VersionMismatch

MAGIC = b"DFKD"
FORMAT_VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_tensors(path: str | Path, header: Mapping, tensors: Mapping[str, np.ndarray]) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    head = canonical_json(header).encode("utf-8")
    buf.write(struct.pack("<Q", len(head)))
    buf.write(head)
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<Q", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<Q", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    Path(path).write_bytes(buf.getvalue())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptCheckpoint(f"unexpected end of file at byte {self.pos} (wanted {n} more)")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    @property
    def done(self) -> bool:
        return self.pos == len(self.data)


def read_tensors(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise CorruptCheckpoint("bad magic bytes")
    (version,) = struct.unpack("<I", r.take(4))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"format version {version}, expected {FORMAT_VERSION}")
    try:
        header = json.loads(r.take(r.u64()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"unreadable header: {exc}") from exc
    tensors = {}
    while not r.done:
        try:
            name = r.take(r.u64()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptCheckpoint("unreadable tensor name") from exc
        rank = r.u64()
        if rank > 8:
            raise CorruptCheckpoint(f"implausible rank {rank} for {name!r}")
        shape = struct.unpack(f"<{rank}Q", r.take(8 * rank))
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)
        tensors[name] = arr.astype(np.float32)
    return header, tensors
