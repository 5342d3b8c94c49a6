"""MNIST ingestion from IDX files (optionally gzip-compressed)."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
DATA_DIR_ENV = "GLIMPSE_DATA_DIR"

SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxError(IOError):
    """Malformed IDX input; the message names the offending field."""


@dataclass
class Dataset:
    images: np.ndarray   # (count, 1, rows, cols) float64 in [-0.5, 0.5]
    labels: np.ndarray   # (count,) int64
    split: str
    indices: np.ndarray | None = None  # positions in the source file

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        src = self.indices[idx] if self.indices is not None else idx
        return Dataset(self.images[idx], self.labels[idx], self.split, src)


def _read(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx_images(raw: bytes, name: str = "images") -> np.ndarray:
    if len(raw) < 16:
        raise IdxError(f"{name}: header truncated ({len(raw)} bytes)")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGE_MAGIC:
        raise IdxError(f"{name}: magic is {magic}, expected {IMAGE_MAGIC}")
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        raise IdxError(f"{name}: pixel data has {len(raw) - 16} bytes, header count {count} x {rows} x {cols} needs {expected - 16}")
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def parse_idx_labels(raw: bytes, name: str = "labels") -> np.ndarray:
    if len(raw) < 8:
        raise IdxError(f"{name}: header truncated ({len(raw)} bytes)")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != LABEL_MAGIC:
        raise IdxError(f"{name}: magic is {magic}, expected {LABEL_MAGIC}")
    if len(raw) != 8 + count:
        raise IdxError(f"{name}: label data has {len(raw) - 8} bytes, header count is {count}")
    return np.frombuffer(raw, dtype=np.uint8, offset=8)


def normalize(raw) -> np.ndarray:
    """Bytes 0..255 -> floats in [-0.5, 0.5]."""
    return np.asarray(raw, dtype=np.float64) / 255.0 - 0.5


def load_idx(images_path, labels_path, split: str = "train") -> Dataset:
    images = parse_idx_images(_read(images_path), str(images_path))
    labels = parse_idx_labels(_read(labels_path), str(labels_path))
    if len(images) != len(labels):
        raise IdxError(f"count: {len(images)} images but {len(labels)} labels")
    return Dataset(normalize(images)[:, None], labels.astype(np.int64), split, np.arange(len(labels)))


def data_dir(explicit=None) -> Path:
    path = explicit or os.environ.get(DATA_DIR_ENV)
    if not path:
        raise FileNotFoundError(f"no dataset directory given and ${DATA_DIR_ENV} is unset")
    return Path(path)


def load_split(split: str, directory=None) -> Dataset:
    """Load ``train`` or ``test`` from a directory holding the standard file names (``.gz`` optional)."""
    root = data_dir(directory)
    paths = []
    for name in SPLIT_FILES[split]:
        for cand in (root / name, root / f"{name}.gz"):
            if cand.exists():
                paths.append(cand)
                break
        else:
            raise FileNotFoundError(f"{root / name} not found")
    return load_idx(*paths, split=split)


def subset(ds: Dataset, per_class: int, seed: int, classes: int = 10) -> Dataset:
    """Class-balanced, seed-deterministic selection of ``per_class`` examples per label."""
    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(classes):
        pool = np.flatnonzero(ds.labels == c)
        if len(pool) < per_class:
            raise ValueError(f"class {c} has {len(pool)} examples, {per_class} requested")
        chosen.append(rng.choice(pool, size=per_class, replace=False))
    idx = np.sort(np.concatenate(chosen))
    return ds.take(idx)


def shuffled(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(n)
