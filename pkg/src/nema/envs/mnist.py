"""MNIST in IDX format and the classification fitness used by the GA."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MnistDataset:
    images: np.ndarray  # (n, 784) float64 in [0, 1]
    labels: np.ndarray  # (n,) int64 in 0..9
    split: str = "train"

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise IdxFormatError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise IdxFormatError("pixel values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, size: int, seed: int) -> MnistDataset:
        if size > len(self):
            raise ValueError(f"subset of {size} requested from {len(self)} samples")
        idx = np.sort(np.random.default_rng(seed).choice(len(self), size=size, replace=False))
        return MnistDataset(self.images[idx], self.labels[idx], self.split)


def _header(buf: bytes, magic: int, ndim: int, what: str) -> tuple[int, ...]:
    if len(buf) < 4:
        raise IdxFormatError(f"{what}: truncated at offset 0 (no magic number)")
    (got,) = struct.unpack_from(">I", buf, 0)
    if got != magic:
        raise IdxFormatError(f"{what}: bad magic 0x{got:08x} at offset 0, expected 0x{magic:08x}")
    if len(buf) < 4 + 4 * ndim:
        raise IdxFormatError(f"{what}: truncated at offset {len(buf)} inside the dimension header")
    dims = struct.unpack_from(f">{ndim}I", buf, 4)
    need = 4 + 4 * ndim + int(np.prod(dims))
    if len(buf) < need:
        raise IdxFormatError(f"{what}: truncated at offset {len(buf)}, expected {need} bytes")
    if len(buf) > need:
        raise IdxFormatError(f"{what}: {len(buf) - need} trailing bytes after offset {need}")
    return dims


def mnist_load(image_bytes: bytes, label_bytes: bytes, split: str = "train") -> MnistDataset:
    """Parse big-endian IDX image (n, 28, 28) and label (n,) streams."""
    n_img, rows, cols = _header(image_bytes, IMAGES_MAGIC, 3, "images")
    if (rows, cols) != (28, 28):
        raise IdxFormatError(f"images: expected 28x28 at offset 8, got {rows}x{cols}")
    (n_lab,) = _header(label_bytes, LABELS_MAGIC, 1, "labels")
    if n_img != n_lab:
        raise IdxFormatError(f"labels: count {n_lab} at offset 4 does not match {n_img} images")
    pixels = np.frombuffer(image_bytes, dtype=np.uint8, offset=16).reshape(n_img, 28 * 28)
    labels = np.frombuffer(label_bytes, dtype=np.uint8, offset=8).astype(np.int64)
    if labels.size and labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise IdxFormatError(f"labels: value {labels[bad]} at offset {8 + bad} is not a digit")
    return MnistDataset(pixels / 255.0, labels, split)


def mnist_dump(data: MnistDataset) -> tuple[bytes, bytes]:
    """Inverse of :func:`mnist_load` (pixels are rounded back to bytes)."""
    n = len(data)
    pix = np.rint(data.images * 255.0).astype(np.uint8)
    img = struct.pack(">IIII", IMAGES_MAGIC, n, 28, 28) + pix.tobytes()
    lab = struct.pack(">II", LABELS_MAGIC, n) + data.labels.astype(np.uint8).tobytes()
    return img, lab


def _read(path: str) -> bytes:
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as fh:
        return fh.read()


def mnist_load_files(image_path: str, label_path: str, split: str = "train") -> MnistDataset:
    return mnist_load(_read(image_path), _read(label_path), split)


def mnist_load_dir(directory: str, split: str = "train") -> MnistDataset:
    """Load ``{split}-images-idx3-ubyte[.gz]`` / ``{split}-labels-idx1-ubyte[.gz]``."""
    found = []
    for kind, stem in (("images", "idx3"), ("labels", "idx1")):
        for suffix in (".gz", ""):
            p = os.path.join(directory, f"{split}-{kind}-{stem}-ubyte{suffix}")
            if os.path.exists(p):
                found.append(p)
                break
        else:
            raise FileNotFoundError(f"no {split} {kind} IDX file in {directory}")
    return mnist_load_files(found[0], found[1], split)


def accuracy(scores: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax (lowest index on ties) equals the label."""
    return float(np.mean(np.argmax(scores, axis=1) == labels))
