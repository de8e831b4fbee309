"""Binary tensor files and named-entry checkpoint containers.

Tensor blob layout (all integers little-endian):

    magic   4 bytes   b"CEAT"
    version u32
    rank    u32
    dims    rank x u64
    payload prod(dims) x f64, row-major

A container is a u32 entry count followed by, per entry, a u32 name length,
the UTF-8 name bytes and one tensor blob.
"""
from __future__ import annotations

import io
import struct
from collections.abc import Mapping
from pathlib import Path
from typing import BinaryIO

import numpy as np

from cea_kit.core.constants import TENSOR_FORMAT_VERSION, TENSOR_MAGIC
from cea_kit.core.errors import DimensionError

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


def _read_exact(stream: BinaryIO, count: int) -> bytes:
    data = stream.read(count)
    if len(data) != count:
        raise ValueError(f"truncated tensor data: expected {count} bytes, got {len(data)}")
    return data


def write_tensor(stream: BinaryIO, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype="<f8")
    stream.write(TENSOR_MAGIC)
    stream.write(_U32.pack(TENSOR_FORMAT_VERSION))
    stream.write(_U32.pack(array.ndim))
    for dim in array.shape:
        stream.write(_U64.pack(dim))
    stream.write(array.tobytes(order="C"))


def read_tensor(stream: BinaryIO) -> np.ndarray:
    magic = _read_exact(stream, 4)
    if magic != TENSOR_MAGIC:
        raise ValueError(f"not a tensor blob (magic {magic!r})")
    (version,) = _U32.unpack(_read_exact(stream, 4))
    if version != TENSOR_FORMAT_VERSION:
        raise ValueError(f"unsupported tensor format version {version}")
    (rank,) = _U32.unpack(_read_exact(stream, 4))
    shape = tuple(_U64.unpack(_read_exact(stream, 8))[0] for _ in range(rank))
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    payload = _read_exact(stream, 8 * count)
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)


def tensor_to_bytes(array: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    write_tensor(buffer, array)
    return buffer.getvalue()


def tensor_from_bytes(data: bytes) -> np.ndarray:
    return read_tensor(io.BytesIO(data))


def save_tensor(path: Path, array: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, array)


def load_tensor(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)


def save_container(path: Path, entries: Mapping[str, np.ndarray]) -> None:
    """Write named arrays in insertion order."""
    with open(path, "wb") as fh:
        fh.write(_U32.pack(len(entries)))
        for name, array in entries.items():
            encoded = name.encode("utf-8")
            fh.write(_U32.pack(len(encoded)))
            fh.write(encoded)
            write_tensor(fh, array)


def load_container(path: Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        (count,) = _U32.unpack(_read_exact(fh, 4))
        entries: dict[str, np.ndarray] = {}
        for _ in range(count):
            (length,) = _U32.unpack(_read_exact(fh, 4))
            name = _read_exact(fh, length).decode("utf-8")
            if name in entries:
                raise DimensionError(f"duplicate checkpoint entry {name!r}")
            entries[name] = read_tensor(fh)
        return entries
