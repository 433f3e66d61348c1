"""F2DM binary model format.

Little-endian layout::

    b"F2DM"                      magic
    u16 version                  currently 1
    u16 H, u16 W, u16 C          input shape
    u16 n_layers
    n_layers x (u8 kind, u8 activation, u32 size)
    float32 parameter blocks     W then b for each conv/dense layer, in order
    n_layers x u8                freeze flags

Optimizer state is not stored; a loaded model starts with fresh Adam moments.
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np

from .layers import LayerSpec
from .model import Model

MAGIC = b"F2DM"
VERSION = 1
KIND_CODES = {"conv": 1, "maxpool": 2, "flatten": 3, "dense": 4, "softmax": 5}
ACT_CODES = {None: 0, "relu": 1}
_KINDS = {v: k for k, v in KIND_CODES.items()}
_ACTS = {v: k for k, v in ACT_CODES.items()}


class ModelFormatError(ValueError):
    pass


def dumps(model: Model) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION))
    buf.write(struct.pack("<3H", *model.input_shape))
    buf.write(struct.pack("<H", len(model.specs)))
    for spec in model.specs:
        buf.write(struct.pack("<BBI", KIND_CODES[spec.kind], ACT_CODES[spec.activation], spec.size))
    for _, _, p in model.parameters():
        buf.write(np.ascontiguousarray(p, dtype="<f4").tobytes())
    buf.write(bytes(int(f) for f in model.frozen))
    return buf.getvalue()


def save_model(model: Model, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(model))


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError("truncated model file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(data: bytes, dtype=np.float32) -> Model:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise ModelFormatError("not an F2DM model file (bad magic)")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise ModelFormatError(f"unsupported F2DM version {version}")
    shape = r.unpack("<3H")
    (n_layers,) = r.unpack("<H")
    specs = []
    for _ in range(n_layers):
        kind, act, size = r.unpack("<BBI")
        try:
            specs.append(LayerSpec(_KINDS[kind], size, _ACTS[act]))
        except KeyError:
            raise ModelFormatError(f"unknown layer code ({kind}, {act})") from None
    try:
        model = Model(specs, shape, dtype)
    except ValueError as exc:
        raise ModelFormatError(f"invalid layer table: {exc}") from None
    for layer in model.layers:
        for name, pshape in layer.param_shapes().items():
            raw = r.take(4 * int(np.prod(pshape)))
            layer.params[name] = np.frombuffer(raw, dtype="<f4").reshape(pshape).astype(dtype)
    model.reset_optimizer()
    flags = r.take(n_layers)
    if r.pos != len(data):
        raise ModelFormatError("trailing bytes after model data")
    model.frozen = [bool(b) for b in flags]
    return model


def load_model(path: str | os.PathLike, dtype=np.float32) -> Model:
    with open(path, "rb") as fh:
        return loads(fh.read(), dtype)
