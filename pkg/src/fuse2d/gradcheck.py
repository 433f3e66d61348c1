"""Central finite-difference check of the analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cnn.model import forward, gradcheck_architecture, init_model, loss_and_gradients, weighted_cross_entropy

# below this magnitude both gradients count as zero for the relative error
ZERO_FLOOR = 1e-7


@dataclass
class GradCheckResult:
    max_rel_error: float
    per_param: dict  # "layer<i>.<name>" -> max relative error
    n_checked: int


def relative_error(a, b, floor=ZERO_FLOOR):
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def check_gradients(model=None, x=None, labels=None, weights=None, h=1e-4, seed=0) -> GradCheckResult:
    """Compare every parameter gradient with a central difference.

    Runs in float64. Defaults to the small 8x8x3 check network on a random
    batch of four weighted examples.
    """
    rng = np.random.default_rng(seed)
    if model is None:
        specs, shape = gradcheck_architecture()
        model = init_model(specs, shape, seed, dtype=np.float64)
        # non-zero biases so no unit sits exactly at a ReLU kink
        for _, name, p in model.parameters():
            if name == "b":
                p[...] = rng.uniform(-0.1, 0.1, p.shape)
    else:
        model = model.astype(np.float64)
    if x is None:
        x = rng.uniform(0.0, 1.0, (4,) + model.input_shape)
        labels = rng.integers(0, 2, 4)
        weights = rng.uniform(0.5, 2.0, 4)

    def loss_at():
        return weighted_cross_entropy(forward(model, x), labels, weights)

    _, grads, _ = loss_and_gradients(model, x, labels, weights)
    per_param, n = {}, 0
    for i, name, p in model.parameters():
        numeric = np.empty_like(p)
        flat = p.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = loss_at()
            flat[k] = orig - h
            down = loss_at()
            flat[k] = orig
            numeric.reshape(-1)[k] = (up - down) / (2 * h)
        per_param[f"layer{i}.{name}"] = float(relative_error(grads[i][name], numeric).max())
        n += p.size
    return GradCheckResult(max(per_param.values()), per_param, n)
