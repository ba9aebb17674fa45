"""MNIST IDX ingestion.

Image files: big-endian u32 magic 0x00000803, u32 count, u32 rows, u32 cols,
then ``count * rows * cols`` unsigned bytes. Label files: magic 0x00000801,
u32 count, then ``count`` bytes. Files ending in ``.gz`` are decompressed
transparently.
"""

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from ..exceptions import IdxFormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class Dataset:
    images: np.ndarray  # N x (rows * cols), values in [0, 1]
    labels: np.ndarray  # N integers
    split: str = "train"

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise IdxFormatError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels", "count"
            )

    def __len__(self):
        return self.labels.shape[0]

    def subset(self, idx):
        return Dataset(self.images[idx], self.labels[idx], self.split)


def _read(path):
    opener = gzip.open if os.fspath(path).endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def _header(buf, n_fields, magic, path):
    size = 4 * n_fields
    if len(buf) < size:
        raise IdxFormatError(f"{path}: truncated header ({len(buf)} bytes)", "header")
    fields = struct.unpack(f">{n_fields}I", buf[:size])
    if fields[0] != magic:
        raise IdxFormatError(
            f"{path}: bad magic 0x{fields[0]:08x}, expected 0x{magic:08x}", "magic"
        )
    return fields[1:], buf[size:]


def read_idx_images(path):
    (count, rows, cols), body = _header(_read(path), 4, IMAGE_MAGIC, path)
    expected = count * rows * cols
    if len(body) < expected:
        raise IdxFormatError(
            f"{path}: truncated pixel data ({len(body)} of {expected} bytes)", "pixels"
        )
    raw = np.frombuffer(body, dtype=np.uint8, count=expected)
    return raw.reshape(count, rows * cols)


def read_idx_labels(path):
    (count,), body = _header(_read(path), 2, LABEL_MAGIC, path)
    if len(body) < count:
        raise IdxFormatError(f"{path}: truncated labels ({len(body)} of {count} bytes)", "labels")
    return np.frombuffer(body, dtype=np.uint8, count=count)


def load_mnist_idx(images_path, labels_path, split="train"):
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels", "count"
        )
    return Dataset(images.astype(np.float64) / 255.0, labels.astype(np.int64), split)


def load_mnist(root, split="train"):
    images, labels = MNIST_FILES[split]
    root = os.fspath(root)

    def pick(name):
        plain = os.path.join(root, name)
        return plain if os.path.exists(plain) or not os.path.exists(plain + ".gz") else plain + ".gz"

    return load_mnist_idx(pick(images), pick(labels), split)


def write_idx_images(path, images):
    """Write a uint8 array of shape (count, rows, cols) as an IDX image file."""
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">4I", IMAGE_MAGIC, count, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">2I", LABEL_MAGIC, labels.size))
        f.write(labels.tobytes())
