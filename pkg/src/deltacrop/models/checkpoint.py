"""Checkpoints: ``checkpoint.json`` metadata + ``weights.bin`` tensor blob.

Blob layout (little-endian)::

    b"DCW1" | u32 tensor count | per tensor, in sorted-name order:
        u32 name length | UTF-8 name | u32 ndim | u32 dims... | float32 values
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from ..datastore import atomic_write_bytes
from ..errors import FormatError, TruncationError

BLOB_MAGIC = b"DCW1"


def encode_tensors(arrays: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(BLOB_MAGIC)
    buf.write(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def decode_tensors(blob: bytes, source: str = "<blob>") -> dict[str, np.ndarray]:
    if blob[:4] != BLOB_MAGIC:
        raise FormatError(f"{source}: bad tensor blob magic {blob[:4]!r}")
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise TruncationError(f"{source}: blob ends at byte {len(blob)}, needed {pos + n}")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        out[name] = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape).astype(np.float32)
    if pos != len(blob):
        raise TruncationError(f"{source}: {len(blob) - pos} trailing bytes after last tensor")
    return out


def save_checkpoint(directory, arrays: dict[str, np.ndarray], metadata: dict) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(directory / "weights.bin", encode_tensors(arrays))
    text = json.dumps(metadata, indent=1, sort_keys=True) + "\n"
    atomic_write_bytes(directory / "checkpoint.json", text.encode("utf-8"))
    return directory


def load_checkpoint(directory) -> tuple[dict[str, np.ndarray], dict]:
    directory = Path(directory)
    try:
        meta = json.loads((directory / "checkpoint.json").read_text(encoding="utf-8"))
        blob = (directory / "weights.bin").read_bytes()
    except FileNotFoundError as exc:
        raise FormatError(f"incomplete checkpoint in {directory}: {exc.filename} missing") from None
    return decode_tensors(blob, str(directory / "weights.bin")), meta
