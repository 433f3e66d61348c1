"""Layer math for the NHWC convolutional classifier.

Every layer caches what its backward pass needs during a training-mode
forward call; ``backward`` fills ``self.grads`` and returns the gradient
with respect to the layer input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KINDS = ("conv", "maxpool", "flatten", "dense", "softmax")
ACTIVATIONS = (None, "relu")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    size: int = 0  # filters for conv, units for dense
    activation: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind in ("conv", "dense") and self.size < 1:
            raise ValueError(f"{self.kind} layer needs a positive size")

    @property
    def trainable(self) -> bool:
        return self.kind in ("conv", "dense")

    @property
    def feature(self) -> bool:
        return self.kind in ("conv", "maxpool", "flatten")


def Conv(filters, activation="relu"):
    return LayerSpec("conv", filters, activation)


def MaxPool():
    return LayerSpec("maxpool")


def Flatten():
    return LayerSpec("flatten")


def Dense(units, activation=None):
    return LayerSpec("dense", units, activation)


def Softmax():
    return LayerSpec("softmax")


def softmax(x, axis=-1):
    """Row-wise softmax with max subtraction."""
    x = np.asarray(x)
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


class Layer:
    spec: LayerSpec

    def __init__(self, spec, in_shape):
        self.spec = spec
        self.in_shape = tuple(in_shape)
        self.out_shape = self.in_shape
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.cache = None

    def param_shapes(self) -> dict:
        return {}

    def init_params(self, rng, dtype):
        pass

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def _need_cache(self):
        if self.cache is None:
            raise RuntimeError(f"{self.spec.kind}: backward called without a training forward pass")
        return self.cache


def _he_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2D(Layer):
    """3x3 stride-1 "same" convolution (cross-correlation) with optional ReLU."""

    k = 3

    def __init__(self, spec, in_shape):
        super().__init__(spec, in_shape)
        if len(self.in_shape) != 3:
            raise ValueError(f"conv expects HxWxC input, got {self.in_shape}")
        h, w, _ = self.in_shape
        self.out_shape = (h, w, spec.size)

    def param_shapes(self):
        return {"W": (self.k, self.k, self.in_shape[2], self.spec.size), "b": (self.spec.size,)}

    def init_params(self, rng, dtype):
        cin = self.in_shape[2]
        self.params = {
            "W": _he_uniform(rng, (self.k, self.k, cin, self.spec.size), self.k * self.k * cin, dtype),
            "b": np.zeros(self.spec.size, dtype=dtype),
        }

    def forward(self, x, train=False):
        n, h, w, c = x.shape
        W, b = self.params["W"], self.params["b"]
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        # (N, H, W, C, kh, kw) -> (N*H*W, kh*kw*C) matching W's (kh, kw, C) order
        cols = sliding_window_view(xp, (self.k, self.k), axis=(1, 2))
        cols = cols.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, -1)
        z = cols @ W.reshape(-1, W.shape[-1]) + b
        out = np.maximum(z, 0) if self.spec.activation == "relu" else z
        if train:
            self.cache = (x.shape, cols, z > 0)
        return out.reshape(n, h, w, -1)

    def backward(self, dout):
        shape, cols, active = self._need_cache()
        n, h, w, c = shape
        W = self.params["W"]
        dz = dout.reshape(n * h * w, -1)
        if self.spec.activation == "relu":
            dz = dz * active
        self.grads = {"W": (cols.T @ dz).reshape(W.shape), "b": dz.sum(axis=0)}
        dcols = (dz @ W.reshape(-1, W.shape[-1]).T).reshape(n, h, w, self.k, self.k, c)
        dxp = np.zeros((n, h + 2, w + 2, c), dtype=dout.dtype)
        for i in range(self.k):
            for j in range(self.k):
                dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, i, j, :]
        return dxp[:, 1:-1, 1:-1, :]


class MaxPool2D(Layer):
    """2x2 max pool, stride 2. Gradient goes to the first maximal entry."""

    def __init__(self, spec, in_shape):
        super().__init__(spec, in_shape)
        h, w, c = self.in_shape
        if h % 2 or w % 2:
            raise ValueError(f"maxpool needs even spatial dims, got {h}x{w}")
        self.out_shape = (h // 2, w // 2, c)

    def forward(self, x, train=False):
        n, h, w, c = x.shape
        blocks = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
        blocks = blocks.reshape(n, h // 2, w // 2, c, 4)
        idx = np.argmax(blocks, axis=-1)
        if train:
            self.cache = (x.shape, idx)
        return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        shape, idx = self._need_cache()
        n, h, w, c = shape
        g = np.zeros(dout.shape + (4,), dtype=dout.dtype)
        np.put_along_axis(g, idx[..., None], dout[..., None], axis=-1)
        g = g.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        return g.reshape(shape)


class FlattenLayer(Layer):
    def __init__(self, spec, in_shape):
        super().__init__(spec, in_shape)
        self.out_shape = (int(np.prod(self.in_shape)),)

    def forward(self, x, train=False):
        if train:
            self.cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._need_cache())


class DenseLayer(Layer):
    def __init__(self, spec, in_shape):
        super().__init__(spec, in_shape)
        if len(self.in_shape) != 1:
            raise ValueError(f"dense expects flat input, got {self.in_shape}; add a flatten layer")
        self.out_shape = (spec.size,)

    def param_shapes(self):
        return {"W": (self.in_shape[0], self.spec.size), "b": (self.spec.size,)}

    def init_params(self, rng, dtype):
        fan_in = self.in_shape[0]
        self.params = {
            "W": _he_uniform(rng, (fan_in, self.spec.size), fan_in, dtype),
            "b": np.zeros(self.spec.size, dtype=dtype),
        }

    def forward(self, x, train=False):
        z = x @ self.params["W"] + self.params["b"]
        out = np.maximum(z, 0) if self.spec.activation == "relu" else z
        if train:
            self.cache = (x, z > 0)
        return out

    def backward(self, dout):
        x, active = self._need_cache()
        dz = dout * active if self.spec.activation == "relu" else dout
        self.grads = {"W": x.T @ dz, "b": dz.sum(axis=0)}
        return dz @ self.params["W"].T


class SoftmaxLayer(Layer):
    def forward(self, x, train=False):
        return softmax(x)

    def backward(self, dout):
        # cross-entropy gradients enter below this layer; see Model.backward
        raise RuntimeError("softmax backward is fused with the loss")


LAYER_TYPES = {
    "conv": Conv2D,
    "maxpool": MaxPool2D,
    "flatten": FlattenLayer,
    "dense": DenseLayer,
    "softmax": SoftmaxLayer,
}


def build_layer(spec: LayerSpec, in_shape) -> Layer:
    return LAYER_TYPES[spec.kind](spec, in_shape)
