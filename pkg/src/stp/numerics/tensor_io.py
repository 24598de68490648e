"""Binary tensor serialization.

Single-tensor format (extension .stpt), all integers little-endian:

    4 bytes magic "STPT"
    u8  version (currently 1)
    u8  dtype   (0 = float32, 1 = float64)
    u8  ndim
    ndim x u32  dims
    raw little-endian values, C order

A checkpoint is a flat container of (path, tensor) records sorted by
path::

    u32 path_len | path utf-8 | tensor blob

Both writers are deterministic byte-for-byte given the same inputs.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"STPT"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def dumps_tensor(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, order="C")  # ascontiguousarray would 1-d-ify 0-d
    code = _CODES.get(arr.dtype)
    if code is None:
        raise FormatError(f"unsupported dtype {arr.dtype}; only float32/float64")
    if arr.ndim > 255:
        raise FormatError("too many dimensions")
    head = MAGIC + struct.pack("<BBB", VERSION, code, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()


def _read_tensor(buf: io.BytesIO) -> np.ndarray:
    magic = buf.read(4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}; not a tensor file")
    version, code, ndim = struct.unpack("<BBB", _exactly(buf, 3))
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    dims = struct.unpack(f"<{ndim}I", _exactly(buf, 4 * ndim))
    dtype = _DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    raw = _exactly(buf, count * dtype.itemsize)
    return np.frombuffer(raw, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))


def _exactly(buf, n: int) -> bytes:
    b = buf.read(n)
    if len(b) != n:
        raise FormatError(f"truncated file: wanted {n} bytes, got {len(b)}")
    return b


def save_tensor(path, arr: np.ndarray) -> None:
    Path(path).write_bytes(dumps_tensor(arr))


def load_tensor(path) -> np.ndarray:
    buf = io.BytesIO(Path(path).read_bytes())
    arr = _read_tensor(buf)
    if buf.read(1):
        raise FormatError("trailing bytes after tensor payload")
    return arr


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    out = bytearray()
    for key in sorted(tensors):
        enc = key.encode("utf-8")
        out += struct.pack("<I", len(enc)) + enc + dumps_tensor(tensors[key])
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    buf = io.BytesIO(Path(path).read_bytes())
    out: dict[str, np.ndarray] = {}
    while True:
        head = buf.read(4)
        if not head:
            return out
        if len(head) != 4:
            raise FormatError("truncated checkpoint record header")
        (n,) = struct.unpack("<I", head)
        key = _exactly(buf, n).decode("utf-8")
        if key in out:
            raise FormatError(f"duplicate checkpoint key {key!r}")
        out[key] = _read_tensor(buf)
