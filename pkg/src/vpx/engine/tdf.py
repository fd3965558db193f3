"""Binary tensor container ("TDF") and named-tensor archives.

Record layout (little-endian)::

    b"TDF1" | u8 dtype | u8 rank | rank x u32 dims | row-major payload

dtype 0 is float32; dtype 1 is uint8 (used for embedded JSON headers).
An archive is ``u32 count`` followed by ``count`` entries of
``u16 name_len | utf-8 name | TDF record``.
"""
from __future__ import annotations

import io
import json
import os
import struct
from typing import BinaryIO

import numpy as np

MAGIC = b"TDF1"
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("u1")}
CODES = {np.dtype("float32"): 0, np.dtype("uint8"): 1}
HEADER_ENTRY = "__header__"


class TDFError(ValueError):
    """Malformed or truncated TDF data."""


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TDFError(f"truncated TDF data while reading {what}: wanted {n} bytes, got {len(data)}")
    return data


def write_tdf(f: BinaryIO, array: np.ndarray) -> None:
    array = np.asarray(array)
    code = CODES.get(array.dtype)
    if code is None:
        raise TDFError(f"unsupported dtype {array.dtype}; TDF stores float32 or uint8")
    if array.ndim > 255:
        raise TDFError("rank exceeds 255")
    f.write(MAGIC)
    f.write(struct.pack("<BB", code, array.ndim))
    f.write(struct.pack(f"<{array.ndim}I", *array.shape))
    f.write(np.ascontiguousarray(array, dtype=DTYPES[code]).tobytes())


def read_tdf(f: BinaryIO) -> np.ndarray:
    magic = _read_exact(f, 4, "magic")
    if magic != MAGIC:
        raise TDFError(f"bad magic bytes {magic!r}, expected {MAGIC!r}")
    code, rank = struct.unpack("<BB", _read_exact(f, 2, "dtype/rank"))
    if code not in DTYPES:
        raise TDFError(f"unknown dtype code {code}")
    dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, "dims"))
    dtype = DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64))
    payload = _read_exact(f, count * dtype.itemsize, "payload")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))


def save_tdf(path: str | os.PathLike, array: np.ndarray) -> None:
    with open(path, "wb") as f:
        write_tdf(f, array)


def load_tdf(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        arr = read_tdf(f)
        if f.read(1):
            raise TDFError(f"{path}: trailing bytes after TDF record")
    return arr


def write_archive(f: BinaryIO, entries: dict[str, np.ndarray]) -> None:
    f.write(struct.pack("<I", len(entries)))
    for name, arr in entries.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise TDFError(f"entry name too long: {name[:40]}...")
        f.write(struct.pack("<H", len(raw)))
        f.write(raw)
        write_tdf(f, arr)


def read_archive(f: BinaryIO) -> dict[str, np.ndarray]:
    (count,) = struct.unpack("<I", _read_exact(f, 4, "entry count"))
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", _read_exact(f, 2, "name length"))
        name = _read_exact(f, n, "entry name").decode("utf-8")
        if name in out:
            raise TDFError(f"duplicate archive entry {name!r}")
        out[name] = read_tdf(f)
    return out


def save_archive(path, entries: dict[str, np.ndarray], header: dict | None = None) -> None:
    """Write an archive; ``header`` (JSON-serializable) becomes the first entry."""
    full: dict[str, np.ndarray] = {}
    if header is not None:
        blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        full[HEADER_ENTRY] = np.frombuffer(blob, dtype=np.uint8)
    for name, arr in entries.items():
        if name == HEADER_ENTRY:
            raise TDFError(f"{HEADER_ENTRY!r} is reserved")
        full[name] = np.asarray(arr)
    buf = io.BytesIO()
    write_archive(buf, full)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_archive(path) -> tuple[dict | None, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        entries = read_archive(f)
        if f.read(1):
            raise TDFError(f"{path}: trailing bytes after archive")
    header = None
    if HEADER_ENTRY in entries:
        header = json.loads(entries.pop(HEADER_ENTRY).tobytes().decode("utf-8"))
    return header, entries
