"""The "DARN" binary model container shared by the neural and MaxEnt models.

Layout (all integers unsigned 32-bit little-endian)::

    b"DARN" | version | model type (len + UTF-8)
    vocabulary: count, then (len + UTF-8) per word in index order (index 1 first)
    labels:     count, then (len + UTF-8) per label
    tensors until EOF: name (len + UTF-8), rank (1 byte), dims, float32 LE payload
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DARN"
VERSION = 1
_U32 = struct.Struct("<I")


class ModelFormatError(ValueError):
    pass


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return _U32.pack(len(b)) + b


def write_container(
    path: str | Path,
    model_type: str,
    vocab_words: list[str],
    labels: list[str],
    tensors: dict[str, np.ndarray],
) -> None:
    out = bytearray(MAGIC)
    out += _U32.pack(VERSION)
    out += _pack_str(model_type)
    for block in (vocab_words, labels):
        out += _U32.pack(len(block))
        for s in block:
            out += _pack_str(s)
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.ndim > 255:
            raise ValueError(f"tensor {name} has too many dimensions")
        out += _pack_str(name)
        out += bytes([arr.ndim])
        for d in arr.shape:
            out += _U32.pack(d)
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError(f"truncated {what} at byte {self.pos}")
        b = self.data[self.pos : self.pos + n]
        self.pos += n
        return b

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]

    def string(self, what: str) -> str:
        n = self.u32(what)
        try:
            return self.take(n, what).decode("utf-8")
        except UnicodeDecodeError:
            raise ModelFormatError(f"invalid UTF-8 in {what} at byte {self.pos - n}") from None


def read_container(path: str | Path):
    """Return ``(model_type, vocab_words, labels, tensors)``."""
    r = _Reader(Path(path).read_bytes())
    if r.take(4, "magic") != MAGIC:
        raise ModelFormatError(f"{path}: not a DARN model file")
    version = r.u32("version")
    if version != VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    model_type = r.string("model type")
    blocks = []
    for what in ("vocabulary", "labels"):
        n = r.u32(f"{what} count")
        blocks.append([r.string(what) for _ in range(n)])
    tensors: dict[str, np.ndarray] = {}
    while r.pos < len(r.data):
        name = r.string("tensor name")
        rank = r.take(1, "tensor rank")[0]
        dims = tuple(r.u32(f"dims of {name}") for _ in range(rank))
        count = int(np.prod(dims, dtype=np.int64))
        payload = r.take(4 * count, f"payload of {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    return model_type, blocks[0], blocks[1], tensors


def expect_shape(tensors: dict[str, np.ndarray], name: str, shape: tuple[int, ...]) -> np.ndarray:
    if name not in tensors:
        raise ModelFormatError(f"missing tensor {name}")
    if tensors[name].shape != shape:
        raise ModelFormatError(f"tensor {name} has shape {tensors[name].shape}, expected {shape}")
    return tensors[name]
