"""Little-endian binary framing shared by the on-disk formats.

All integers are fixed-width little-endian; arrays are length-prefixed raw
buffers. Writers always produce identical bytes for identical inputs (no
timestamps, no compression), which the determinism contract relies on.
"""

import struct

import numpy as np


class FormatError(ValueError):
    """Corrupt or unsupported binary payload."""


def write_u8(f, value):
    f.write(struct.pack("<B", value))


def read_u8(f) -> int:
    return struct.unpack("<B", _take(f, 1))[0]


def write_u32(f, value):
    f.write(struct.pack("<I", value))


def read_u32(f) -> int:
    return struct.unpack("<I", _take(f, 4))[0]


def write_u64(f, value):
    f.write(struct.pack("<Q", value))


def read_u64(f) -> int:
    return struct.unpack("<Q", _take(f, 8))[0]


def write_i64(f, value):
    f.write(struct.pack("<q", value))


def read_i64(f) -> int:
    return struct.unpack("<q", _take(f, 8))[0]


def write_f64(f, value):
    f.write(struct.pack("<d", value))


def read_f64(f) -> float:
    return struct.unpack("<d", _take(f, 8))[0]


def write_str(f, text: str):
    data = text.encode("utf-8")
    write_u32(f, len(data))
    f.write(data)


def read_str(f) -> str:
    n = read_u32(f)
    return _take(f, n).decode("utf-8")


def write_array(f, arr: np.ndarray, dtype: str):
    """Length-prefixed flat array stored as `dtype` (little-endian code)."""
    flat = np.ascontiguousarray(arr, dtype=dtype).ravel()
    write_u64(f, flat.size)
    f.write(flat.tobytes())


def read_array(f, dtype: str) -> np.ndarray:
    n = read_u64(f)
    itemsize = np.dtype(dtype).itemsize
    return np.frombuffer(_take(f, n * itemsize), dtype=dtype).copy()


def write_magic(f, magic: bytes, version: int):
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    f.write(magic)
    write_u32(f, version)


def read_magic(f, magic: bytes, max_version: int) -> int:
    got = _take(f, 4)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    version = read_u32(f)
    if not 1 <= version <= max_version:
        raise FormatError(f"unsupported format version {version}")
    return version


def _take(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError("truncated payload")
    return data
