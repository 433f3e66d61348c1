"""Adam with bias correction, and feature-layer freezing."""

from __future__ import annotations

import numpy as np

from .model import Model, NonFiniteError


def adam_step(model: Model, grads, learning_rate=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8) -> Model:
    """One in-place Adam update of every unfrozen layer.

    Step counters are kept per layer, so frozen layers neither move nor
    advance their moment estimates.
    """
    for layer_grads in grads:
        for g in layer_grads.values():
            if not np.all(np.isfinite(g)):
                raise NonFiniteError("non-finite gradient")

    for i, (layer, layer_grads) in enumerate(zip(model.layers, grads)):
        if model.frozen[i] or not layer.params:
            continue
        state = model.adam[i]
        state["t"] += 1
        t = state["t"]
        bc1 = 1.0 - beta1 ** t
        bc2 = 1.0 - beta2 ** t
        for name, p in layer.params.items():
            g = layer_grads[name].astype(p.dtype, copy=False)
            m, v = state["m"][name], state["v"][name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p -= (learning_rate * m_hat / (np.sqrt(v_hat) + epsilon)).astype(p.dtype, copy=False)
    return model


def freeze_features(model: Model) -> Model:
    """Flag conv, pool and flatten layers as frozen; dense layers stay trainable."""
    for i, spec in enumerate(model.specs):
        if spec.feature:
            model.frozen[i] = True
    return model
