"""On-disk containers.

Array container (``.arr``)::

    b"LVMA" | u8 version | u8 len | dtype str | u8 ndim | u64 shape[ndim] | payload

Everything little-endian. Maps and checkpoints use a bundle: a 4-byte
magic, a JSON header, then one array container per named array in
header order.
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

ARRAY_MAGIC = b"LVMA"
ARRAY_VERSION = 1


def _to_le(arr: np.ndarray) -> np.ndarray:
    # ascontiguousarray would promote 0-d arrays to 1-d
    arr = arr if arr.flags.c_contiguous else arr.copy(order="C")
    if arr.dtype.byteorder == ">" or (arr.dtype.byteorder == "=" and not np.little_endian):
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    return arr


def encode_array(arr) -> bytes:
    arr = _to_le(np.asarray(arr))
    if arr.dtype.kind not in "biuf":
        raise TypeError(f"unsupported dtype {arr.dtype}")
    dt = arr.dtype.str.encode("ascii")
    head = ARRAY_MAGIC + struct.pack("<BB", ARRAY_VERSION, len(dt)) + dt
    head += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + arr.tobytes(order="C")


def decode_array(stream) -> np.ndarray:
    magic = stream.read(4)
    if magic != ARRAY_MAGIC:
        raise ValueError(f"bad array magic {magic!r}")
    version, n = struct.unpack("<BB", stream.read(2))
    if version != ARRAY_VERSION:
        raise ValueError(f"unsupported array version {version}")
    dtype = np.dtype(stream.read(n).decode("ascii"))
    (ndim,) = struct.unpack("<B", stream.read(1))
    shape = struct.unpack(f"<{ndim}Q", stream.read(8 * ndim))
    count = int(np.prod(shape)) if ndim else 1
    data = stream.read(count * dtype.itemsize)
    return np.frombuffer(data, dtype=dtype).reshape(shape).copy()


def save_array(path, arr) -> None:
    Path(path).write_bytes(encode_array(arr))


def load_array(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_array(f)


def save_bundle(path, magic: bytes, header: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write header + arrays; array order is recorded in the header."""
    assert len(magic) == 4
    header = dict(header)
    header["arrays"] = list(arrays)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for name in header["arrays"]:
            f.write(encode_array(arrays[name]))


def load_bundle(path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        buf = io.BytesIO(f.read())
    got = buf.read(4)
    if got != magic:
        raise ValueError(f"{path}: expected magic {magic!r}, found {got!r}")
    (n,) = struct.unpack("<Q", buf.read(8))
    header = json.loads(buf.read(n).decode("utf-8"))
    arrays = {name: decode_array(buf) for name in header["arrays"]}
    return header, arrays
