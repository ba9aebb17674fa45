"""Flat binary model checkpoints.

Layout, all little-endian::

    b"DTWM"  u32 version  u32 layer_count
    per layer:
        u32 name_length  name (utf-8)  u32 rows  u32 cols
        rows*cols f64 weights (row-major)  cols f64 biases

Activations are not stored: every layer but the last is ReLU.
"""

import struct

import numpy as np

from ..exceptions import CheckpointError
from .model import Layer, MlpModel

MAGIC = b"DTWM"
VERSION = 1


def save_checkpoint(model, path):
    parts = [MAGIC, struct.pack("<II", VERSION, len(model.layers))]
    for layer in model.layers:
        name = layer.name.encode("utf-8")
        rows, cols = layer.weight.shape
        parts.append(struct.pack("<I", len(name)))
        parts.append(name)
        parts.append(struct.pack("<II", rows, cols))
        parts.append(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


class _Reader:
    def __init__(self, buf, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"{self.path}: truncated while reading {what}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def f64(self, count, what):
        return np.frombuffer(self.take(8 * count, what), dtype="<f8").astype(np.float64)


def load_checkpoint(path):
    with open(path, "rb") as f:
        r = _Reader(f.read(), path)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a DTWM checkpoint")
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    count = r.u32("layer count")
    layers = []
    for i in range(count):
        name = r.take(r.u32("name length"), "name").decode("utf-8")
        rows, cols = r.u32("rows"), r.u32("cols")
        weight = r.f64(rows * cols, f"weights of {name}").reshape(rows, cols)
        bias = r.f64(cols, f"biases of {name}")
        layers.append(Layer(name, weight, bias, "relu" if i < count - 1 else "none"))
    if r.pos != len(r.buf):
        raise CheckpointError(f"{path}: {len(r.buf) - r.pos} trailing bytes")
    return MlpModel(layers)
