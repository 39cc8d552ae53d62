"""Reader and writer for the `.nlt` container used by the `nlos` CLI."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

MAGIC = b"NLTV"
VERSION = 1
_PREAMBLE = struct.Struct("<4sII")


class NltError(ValueError):
    """Malformed or inconsistent `.nlt` data."""


@dataclass
class NltFile:
    header: dict[str, Any]
    data: np.ndarray
    # Original header bytes, reused on write while `header` is unchanged.
    raw_header: bytes | None = field(default=None, repr=False)

    @property
    def kind(self) -> str:
        return self.header["kind"]


def decode(buf: bytes) -> NltFile:
    if len(buf) < _PREAMBLE.size:
        raise NltError("file shorter than the preamble")
    magic, version, hlen = _PREAMBLE.unpack_from(buf)
    if magic != MAGIC:
        raise NltError(f"bad magic {magic!r}")
    if version != VERSION:
        raise NltError(f"unsupported version {version}; supported: {VERSION}")
    raw = buf[_PREAMBLE.size : _PREAMBLE.size + hlen]
    if len(raw) != hlen:
        raise NltError("truncated header")
    header = json.loads(raw)
    dims = tuple(header["dims"])
    if len(dims) != 3:
        raise NltError(f"expected 3 dims, got {dims}")
    dtype = header["dtype"]
    payload = buf[_PREAMBLE.size + hlen :]
    count = int(np.prod(dims))
    width = {"f32": 4, "c64": 8}.get(dtype)
    if width is None:
        raise NltError(f"unknown dtype {dtype!r}")
    if len(payload) != count * width:
        raise NltError(f"payload holds {len(payload)} bytes, header implies {count * width}")
    data = np.frombuffer(payload, dtype="<f4" if dtype == "f32" else "<c8").reshape(dims)
    return NltFile(header, data.copy(), bytes(raw))


def encode(f: NltFile) -> bytes:
    dims = list(f.data.shape)
    if dims != list(f.header["dims"]):
        raise NltError(f"data shape {dims} does not match header dims {f.header['dims']}")
    raw = f.raw_header
    if raw is None or json.loads(raw) != f.header:
        raw = json.dumps(f.header, separators=(",", ":")).encode()
    dtype = "<f4" if f.header["dtype"] == "f32" else "<c8"
    payload = np.ascontiguousarray(f.data, dtype=dtype).tobytes()
    return _PREAMBLE.pack(MAGIC, VERSION, len(raw)) + raw + payload


def read_nlt(path: str | Path) -> NltFile:
    return decode(Path(path).read_bytes())


def write_nlt(path: str | Path, f: NltFile) -> None:
    Path(path).write_bytes(encode(f))
