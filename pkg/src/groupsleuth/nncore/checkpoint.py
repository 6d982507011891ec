"""Binary checkpoint container.

Layout (little-endian)::

    b"GSCKPT1"  u32 n_records
    per record: u16 name_len, name (utf-8), u8 ndim, u32 dims[ndim], f32 values
"""
from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"GSCKPT1"


class CheckpointError(ValueError):
    pass


class Checkpoint(OrderedDict):
    """Ordered mapping of tensor name to float32 array."""

    def require(self, name: str, shape: tuple[int, ...] | None = None) -> np.ndarray:
        if name not in self:
            raise CheckpointError(f"checkpoint is missing tensor {name!r}")
        arr = self[name]
        if shape is not None and tuple(arr.shape) != tuple(shape):
            raise CheckpointError(f"tensor {name!r} has shape {arr.shape}, expected {tuple(shape)}")
        return arr

    def with_prefix(self, prefix: str) -> dict[str, np.ndarray]:
        return {k[len(prefix):]: v for k, v in self.items() if k.startswith(prefix)}


def to_bytes(tensors) -> bytes:
    out = [MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        out.append(struct.pack("<H", len(raw)))
        out.append(raw)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def from_bytes(data: bytes) -> Checkpoint:
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError("bad magic")
    pos = len(MAGIC)

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError("truncated checkpoint")
        chunk = data[pos: pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    ckpt = Checkpoint()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        if name in ckpt:
            raise CheckpointError(f"duplicate tensor {name!r}")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        values = np.frombuffer(take(4 * size), dtype="<f4").astype(np.float32)
        ckpt[name] = values.reshape(shape)
    if pos != len(data):
        raise CheckpointError("trailing bytes after last record")
    return ckpt


def save_checkpoint(path, tensors) -> None:
    names = list(tensors)
    if len(set(names)) != len(names):
        raise CheckpointError("tensor names must be unique")
    Path(path).write_bytes(to_bytes(tensors))


def load_checkpoint(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
