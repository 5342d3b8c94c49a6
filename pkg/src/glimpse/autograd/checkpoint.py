"""Checkpoint files: JSON manifest followed by one little-endian float64 blob.

Layout::

    b"GLMPCKPT"                 8-byte magic
    <u8 little-endian>          manifest length in bytes
    manifest (UTF-8 JSON)       {"tensors": [{"name", "shape", "offset"}...], "meta": {...}}
    blob                        concatenated '<f8' values in manifest order

``offset`` is the byte offset of each tensor inside the blob.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"GLMPCKPT"


class CheckpointError(IOError):
    pass


def save_checkpoint(path, tensors: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    entries = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes(order="C"))
        offset += arr.nbytes
    manifest = json.dumps({"tensors": entries, "meta": meta or {}}, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for c in chunks:
            fh.write(c)
    tmp.replace(path)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if len(raw) < 16:
        raise CheckpointError(f"{path}: truncated header")
    (mlen,) = struct.unpack("<Q", raw[8:16])
    try:
        manifest = json.loads(raw[16 : 16 + mlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable manifest") from exc
    blob = memoryview(raw)[16 + mlen :]
    tensors = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        start, stop = entry["offset"], entry["offset"] + 8 * count
        if stop > len(blob):
            raise CheckpointError(f"{path}: blob truncated at tensor {entry['name']!r}")
        tensors[entry["name"]] = np.frombuffer(blob[start:stop], dtype="<f8").reshape(shape).astype(np.float64)
    return tensors, manifest.get("meta", {})
