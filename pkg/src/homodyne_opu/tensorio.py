"""Reader/writer for the OPT1 tensor container.

Layout::

    b"OPT1" | u8 dtype (0 = float32, 1 = int8) | u8 ndim | ndim x u32 LE dims | payload

The payload is row-major, little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"OPT1"
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("i1")}
_CODES = {np.dtype("<f4"): 0, np.dtype("i1"): 1}


def dumps(array, dtype="float32") -> bytes:
    dt = np.dtype("<f4") if dtype == "float32" else np.dtype(dtype)
    if dt not in _CODES:
        raise ValueError(f"OPT1 supports float32 and int8, not {dtype}")
    arr = np.asarray(array)
    if dt.kind == "i":
        if not np.all(arr == np.round(arr)) or arr.min(initial=0) < -128 or arr.max(initial=0) > 127:
            raise ValueError("values do not fit int8")
    elif not np.all(np.isfinite(arr)):
        raise ValueError("OPT1 float payload must be finite")
    if arr.ndim > 255:
        raise ValueError("too many dimensions")
    header = MAGIC + struct.pack("<BB", _CODES[dt], arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=dt).tobytes()


def loads(buf: bytes) -> np.ndarray:
    """Decode an OPT1 blob. Float payloads are widened to float64."""
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise FormatError(f"bad OPT1 magic: {bytes(buf[:4])!r}")
    code, ndim = struct.unpack_from("<BB", buf, 4)
    if code not in DTYPES:
        raise FormatError(f"unknown OPT1 dtype code {code}")
    offset = 6 + 4 * ndim
    if len(buf) < offset:
        raise FormatError("truncated OPT1 header")
    dims = struct.unpack_from(f"<{ndim}I", buf, 6)
    dt = DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64))
    expected = offset + count * dt.itemsize
    if len(buf) != expected:
        raise FormatError(f"OPT1 payload size {len(buf) - offset} != expected {expected - offset}")
    arr = np.frombuffer(buf, dtype=dt, count=count, offset=offset).reshape(dims)
    return arr.astype(np.float64) if code == 0 else arr.copy()


def save(path, array, dtype="float32") -> None:
    Path(path).write_bytes(dumps(array, dtype))


def load(path) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read tensor file {path}: {exc}") from exc
    try:
        return loads(data)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from exc
