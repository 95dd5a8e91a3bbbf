"""Checkpoint file format for named parameter tensors.

Layout (all integers little-endian):
  8 bytes   magic "AXCKPT01"
  uint32    number of tensors
  per tensor:
    uint16  name length, then UTF-8 name bytes
    uint8   rank
    uint32  per dimension
    float32 data, C order

Values are stored as 32-bit floats regardless of the in-memory dtype.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"AXCKPT01"


class CheckpointError(Exception):
    pass


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            data = np.ascontiguousarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", data.ndim))
            for d in data.shape:
                f.write(struct.pack("<I", d))
            f.write(data.tobytes())


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad checkpoint magic {raw[:8]!r}")
    pos = 8
    try:
        (count,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", raw, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", raw, pos)
            pos += 4 * rank
            n = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(raw, dtype="<f4", count=n, offset=pos)
            pos += 4 * n
            out[name] = arr.reshape(shape).astype(np.float64)
    except (struct.error, ValueError) as e:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({e})") from None
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")
    return out
