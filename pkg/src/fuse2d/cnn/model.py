"""Model container, architectures, loss and back-propagation."""

from __future__ import annotations

import numpy as np

from .layers import Conv, Dense, Flatten, LayerSpec, MaxPool, Softmax, build_layer, softmax

LOG_CLAMP = 1e-12

PROFILES = {
    # input side, conv filters, dense units
    "full": (128, (64, 128, 256), 128),
    "tiny": (32, (8, 16, 32), 32),
}


class NonFiniteError(FloatingPointError):
    """Raised when activations, losses or gradients stop being finite."""


def architecture(profile: str = "full", pool_after_first: bool = True):
    """Layer specs and input shape for a named profile.

    Each of the three conv layers is followed by a 2x2 max pool unless
    ``pool_after_first`` is False, in which case only conv 2 and 3 pool.
    """
    try:
        side, filters, units = PROFILES[profile]
    except KeyError:
        raise ValueError(f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}") from None
    specs = []
    for i, f in enumerate(filters):
        specs.append(Conv(f))
        if i > 0 or pool_after_first:
            specs.append(MaxPool())
    specs += [Flatten(), Dense(units, "relu"), Dense(2), Softmax()]
    return specs, (side, side, 3)


def gradcheck_architecture():
    """Small network covering every layer kind, for finite-difference checks."""
    return [Conv(4), MaxPool(), Flatten(), Dense(8, "relu"), Dense(2), Softmax()], (8, 8, 3)


class Model:
    """Ordered layers plus per-layer parameters, Adam state and freeze flags."""

    def __init__(self, specs, input_shape, dtype=np.float32):
        specs = [s if isinstance(s, LayerSpec) else LayerSpec(**s) for s in specs]
        _validate_chain(specs)
        self.specs = specs
        self.input_shape = tuple(int(d) for d in input_shape)
        self.dtype = np.dtype(dtype)
        self.layers = []
        shape = self.input_shape
        for spec in specs:
            layer = build_layer(spec, shape)
            self.layers.append(layer)
            shape = layer.out_shape
        self.frozen = [False] * len(self.layers)
        self.reset_optimizer()

    def reset_optimizer(self):
        self.adam = [
            {"m": {k: np.zeros_like(p) for k, p in layer.params.items()},
             "v": {k: np.zeros_like(p) for k, p in layer.params.items()},
             "t": 0}
            for layer in self.layers
        ]

    @property
    def n_classes(self) -> int:
        return self.layers[-1].out_shape[0]

    def parameters(self):
        """(layer index, name, array) for every trainable array, in layer order."""
        for i, layer in enumerate(self.layers):
            for name in ("W", "b"):
                if name in layer.params:
                    yield i, name, layer.params[name]

    def n_parameters(self) -> int:
        return sum(p.size for _, _, p in self.parameters())

    def astype(self, dtype) -> "Model":
        """Copy with parameters and optimizer state cast to ``dtype``."""
        other = Model(self.specs, self.input_shape, dtype)
        for src, dst, st_src, st_dst in zip(self.layers, other.layers, self.adam, other.adam):
            dst.params = {k: v.astype(dtype) for k, v in src.params.items()}
            st_dst["m"] = {k: v.astype(dtype) for k, v in st_src["m"].items()}
            st_dst["v"] = {k: v.astype(dtype) for k, v in st_src["v"].items()}
            st_dst["t"] = st_src["t"]
        other.frozen = list(self.frozen)
        return other

    def copy(self) -> "Model":
        return self.astype(self.dtype)


def _validate_chain(specs):
    if len(specs) < 2 or specs[-1].kind != "softmax":
        raise ValueError("architecture must end with a softmax layer")
    last = specs[-2]
    if last.kind != "dense" or last.size != 2 or last.activation is not None:
        raise ValueError("architecture must end with Dense(2) -> Softmax")
    if any(s.kind == "softmax" for s in specs[:-1]):
        raise ValueError("softmax may only appear as the final layer")


def init_model(specs, input_shape, seed: int, dtype=np.float32) -> Model:
    """Build a model with He-uniform weights and zero biases."""
    model = Model(specs, input_shape, dtype)
    rng = np.random.default_rng(seed)
    for layer in model.layers:
        layer.init_params(rng, model.dtype)
    model.reset_optimizer()
    return model


def _check_input(model: Model, x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == len(model.input_shape):
        x = x[None]
    if x.shape[1:] != model.input_shape:
        raise ValueError(f"input shape {x.shape[1:]} does not match model input {model.input_shape}")
    return x.astype(model.dtype, copy=False)


def logits(model: Model, x, train: bool = False) -> np.ndarray:
    """Pre-softmax class scores."""
    out = _check_input(model, x)
    for layer in model.layers[:-1]:
        out = layer.forward(out, train)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("non-finite logits in forward pass")
    return out


def forward(model: Model, x, train: bool = False) -> np.ndarray:
    """Class probabilities for a batch of HxWxC inputs scaled to [0, 1]."""
    return model.layers[-1].forward(logits(model, x, train), train)


def weighted_cross_entropy(probs, labels, weights=None) -> float:
    """Weighted mean negative log-likelihood of the true class."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    w = np.ones(len(labels)) if weights is None else np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("sample weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise ValueError("sample weights are all zero")
    p = np.maximum(probs[np.arange(len(labels)), labels], LOG_CLAMP)
    return float(-(w * np.log(p)).sum() / total)


def backward(model: Model, probs, labels, weights=None, weight_total=None):
    """Gradients of the weighted cross-entropy after a training forward pass.

    ``probs`` is the output of that pass. Returns one ``{name: grad}`` dict
    per layer. Frozen layers still get gradients; skipping them is the
    optimizer's job. ``weight_total`` overrides the normalizer so chunks of
    one batch can be accumulated.
    """
    labels = np.asarray(labels, dtype=int)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= model.n_classes:
        raise ValueError("labels outside the model's classes")
    w = np.ones(len(labels)) if weights is None else np.asarray(weights, dtype=np.float64)
    total = w.sum() if weight_total is None else weight_total
    if total <= 0:
        raise ValueError("sample weights are all zero")
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(labels)), labels] = 1
    # softmax + cross-entropy: d loss / d logits = w_i (p - y) / sum(w)
    grad = ((probs - onehot) * (w / total)[:, None]).astype(model.dtype)
    for layer in reversed(model.layers[:-1]):
        grad = layer.backward(grad)
    grads = []
    for layer in model.layers:
        grads.append(dict(layer.grads))
        layer.cache = None
    return grads


def loss_and_gradients(model: Model, x, labels, weights=None, chunk_size=None):
    """Forward + backward over a batch, optionally in fixed-order chunks.

    Chunking bounds memory on large inputs; the result is the gradient of
    the whole batch's weighted loss.
    """
    x = _check_input(model, x)
    labels = np.asarray(labels, dtype=int)
    w = np.ones(len(labels)) if weights is None else np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if total <= 0:
        raise ValueError("sample weights are all zero")
    n = len(x)
    step = n if not chunk_size else int(chunk_size)
    grads, loss, probs_all = None, 0.0, []
    for s in range(0, n, step):
        sl = slice(s, s + step)
        probs = forward(model, x[sl], train=True)
        p = np.maximum(probs[np.arange(len(probs)), labels[sl]].astype(np.float64), LOG_CLAMP)
        loss += float(-(w[sl] * np.log(p)).sum())
        g = backward(model, probs, labels[sl], w[sl], weight_total=total)
        if grads is None:
            grads = g
        else:
            for acc, part in zip(grads, g):
                for k in acc:
                    acc[k] = acc[k] + part[k]
        probs_all.append(probs)
    return loss / total, grads, np.concatenate(probs_all)


def predict_proba(model: Model, x, chunk_size: int = 256) -> np.ndarray:
    x = _check_input(model, x)
    return np.concatenate([forward(model, x[s:s + chunk_size]) for s in range(0, len(x), chunk_size)])


def predict(model: Model, x, chunk_size: int = 256):
    """(labels, probabilities); ties go to class 0."""
    probs = predict_proba(model, x, chunk_size)
    return np.argmax(probs, axis=1), probs


__all__ = [
    "Model", "NonFiniteError", "architecture", "gradcheck_architecture", "init_model",
    "forward", "logits", "softmax", "weighted_cross_entropy", "backward", "loss_and_gradients",
    "predict", "predict_proba",
]
