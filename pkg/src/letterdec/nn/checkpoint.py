"""Binary checkpoint of a module's parameters and buffers.

Layout (little-endian)::

    magic   4 bytes  b"EEGM"
    u32     number of tensors
    u32     reserved (0)
    u32     reserved (0)
    then per tensor:
        u32 name length, name (UTF-8)
        u32 dtype code (0 = float32, 1 = float64)
        u32 ndim, ndim x u32 dims
        raw array bytes
    u32     CRC-32 of everything above
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .layers import Module

MAGIC = b"EEGM"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


def _entries(module: Module):
    for name, p in module.named_parameters():
        yield "param:" + name, p.data
    for name, b in module.named_buffers():
        yield "buffer:" + name, b


def save_checkpoint(module: Module, path) -> None:
    entries = list(_entries(module))
    parts = [MAGIC, struct.pack("<III", len(entries), 0, 0)]
    for name, arr in entries:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<II", _CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[_CODES[arr.dtype]]).tobytes())
    body = b"".join(parts)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(module: Module, path) -> None:
    """Copy stored arrays into ``module``; names and shapes must match exactly."""
    blob = Path(path).read_bytes()
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise ValueError(f"{path}: checkpoint checksum mismatch")
    if body[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {body[:4]!r}")
    (n, _, _) = struct.unpack_from("<III", body, 4)
    pos = 16
    stored = {}
    for _ in range(n):
        (ln,) = struct.unpack_from("<I", body, pos)
        pos += 4
        name = body[pos:pos + ln].decode("utf-8")
        pos += ln
        code, ndim = struct.unpack_from("<II", body, pos)
        pos += 8
        shape = struct.unpack_from(f"<{ndim}I", body, pos)
        pos += 4 * ndim
        dt = _DTYPES[code]
        count = int(np.prod(shape)) if ndim else 1
        stored[name] = np.frombuffer(body, dtype=dt, count=count, offset=pos).reshape(shape)
        pos += count * dt.itemsize
    params = dict(module.named_parameters())
    expected = {"param:" + k for k in params}
    owners = {}
    for m in module.modules():
        for bname in getattr(m, "_buffers", ()):
            owners[id(getattr(m, bname))] = (m, bname)
    bufs = dict(module.named_buffers())
    expected |= {"buffer:" + k for k in bufs}
    if set(stored) != expected:
        missing = sorted(expected - set(stored))
        extra = sorted(set(stored) - expected)
        raise ValueError(f"{path}: checkpoint mismatch (missing {missing}, unexpected {extra})")
    for name, p in params.items():
        arr = stored["param:" + name]
        if arr.shape != p.shape:
            raise ValueError(f"{path}: shape mismatch for {name}: {arr.shape} vs {p.shape}")
        p.data = arr.astype(p.dtype, copy=True)
    for name, b in bufs.items():
        arr = stored["buffer:" + name]
        m, bname = owners[id(b)]
        setattr(m, bname, arr.astype(b.dtype, copy=True))
