"""MNIST ingestion: IDX binary parsing (gzip-transparent), binarization,
one-hot labels, and deterministic stratified subsetting for desk-scale
runs.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

TRAIN_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
TEST_FILES = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


class IdxFormatError(ValueError):
    """Malformed IDX file; message names the offending byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass
class Dataset:
    """Flat image vectors with digit labels.

    ``images`` is (N, 784) uint8: raw 0-255 pixels straight after
    loading, 0/1 after binarization (tracked by ``binarized``).
    """

    images: np.ndarray
    labels: np.ndarray
    split: str = "train"
    binarized: bool = False

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images vs {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.images)


def _open_maybe_gzip(path):
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(fh, count, offset, what):
    data = fh.read(count)
    if len(data) < count:
        raise IdxFormatError(f"truncated {what}: wanted {count} bytes, got {len(data)}", offset)
    return data


def load_idx(images_path, labels_path, split: str = "train") -> Dataset:
    """Parse an IDX image/label file pair into raw 0-255 pixel vectors."""
    with _open_maybe_gzip(images_path) as fh:
        header = _read_exact(fh, 16, 0, "image header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGES_MAGIC:
            raise IdxFormatError(
                f"bad image magic 0x{magic:08x} in {images_path}, expected 0x{IDX_IMAGES_MAGIC:08x}", 0)
        payload = _read_exact(fh, count * rows * cols, 16, "image payload")
        images = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)
    with _open_maybe_gzip(labels_path) as fh:
        header = _read_exact(fh, 8, 0, "label header")
        magic, label_count = struct.unpack(">II", header)
        if magic != IDX_LABELS_MAGIC:
            raise IdxFormatError(
                f"bad label magic 0x{magic:08x} in {labels_path}, expected 0x{IDX_LABELS_MAGIC:08x}", 0)
        payload = _read_exact(fh, label_count, 8, "label payload")
        labels = np.frombuffer(payload, dtype=np.uint8)
    if count != label_count:
        raise IdxFormatError(
            f"count mismatch: {count} images vs {label_count} labels", 4)
    if labels.size and labels.max() > 9:
        raise IdxFormatError(f"label value {labels.max()} outside 0-9", 8)
    return Dataset(images=images.copy(), labels=labels.copy(), split=split)


def load_mnist(data_dir, split: str = "train") -> Dataset:
    """Load one MNIST split from a directory holding the standard IDX
    file names (plain or .gz)."""
    names = TRAIN_FILES if split == "train" else TEST_FILES
    paths = []
    for name in names:
        plain = Path(data_dir) / name
        gz = Path(data_dir) / (name + ".gz")
        if plain.exists():
            paths.append(plain)
        elif gz.exists():
            paths.append(gz)
        else:
            raise FileNotFoundError(f"missing {name}[.gz] under {data_dir}")
    return load_idx(paths[0], paths[1], split=split)


def binarize(raw_pixels, threshold: int = 128):
    """Binarize one 784-pixel vector: bit = 1 iff pixel >= threshold."""
    raw = np.asarray(raw_pixels)
    if raw.shape != (784,):
        raise ValueError(f"expected 784 pixels, got shape {raw.shape}")
    return (raw >= threshold).astype(np.uint8)


def binarize_dataset(ds: Dataset, threshold: int = 128) -> Dataset:
    """Binarize every image of a dataset (vectorized)."""
    return Dataset(images=(ds.images >= threshold).astype(np.uint8),
                   labels=ds.labels, split=ds.split, binarized=True)


def one_hot(label: int, count: int = 10):
    """One-hot encode a digit label."""
    label = int(label)
    if not 0 <= label < count:
        raise ValueError(f"label {label} outside [0, {count})")
    vec = np.zeros(count, dtype=np.uint8)
    vec[label] = 1
    return vec


def subset(ds: Dataset, n: int, seed: int) -> Dataset:
    """Deterministic stratified sample of size n.

    Indices of each class are shuffled with the seeded stream (classes in
    ascending order), then taken round-robin across classes, so counts
    stay balanced to within one item per class.
    """
    if n > len(ds):
        raise ValueError(f"requested {n} items from a dataset of {len(ds)}")
    rng = np.random.default_rng(seed)
    per_class = [np.flatnonzero(ds.labels == c) for c in range(10)]
    per_class = [cls[rng.permutation(len(cls))] for cls in per_class]
    picked = []
    depth = 0
    while len(picked) < n:
        progressed = False
        for cls in per_class:
            if len(picked) >= n:
                break
            if depth < len(cls):
                picked.append(cls[depth])
                progressed = True
        if not progressed:
            raise ValueError("ran out of samples while stratifying")
        depth += 1
    idx = np.asarray(picked[:n])
    return Dataset(images=ds.images[idx], labels=ds.labels[idx],
                   split=ds.split, binarized=ds.binarized)
