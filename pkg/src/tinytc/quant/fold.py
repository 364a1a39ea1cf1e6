from __future__ import annotations

import numpy as np

from tinytc.errors import UnsupportedTopology
from tinytc.nn.layers import BatchNorm, Conv1D
from tinytc.nn.model import Model


def fold_batchnorm(model: Model) -> Model:
    """Absorb every BatchNorm into the Conv1D right before it, using the running statistics.

    The returned model has no BatchNorm layers and produces the same
    infer-mode outputs (up to float rounding).
    """
    layers = []
    for layer in model.layers:
        if isinstance(layer, BatchNorm):
            prev = layers[-1] if layers else None
            if not isinstance(prev, Conv1D):
                raise UnsupportedTopology("BatchNorm must directly follow a Conv1D to be folded")
            scale = layer.params["gamma"].astype(np.float64) / np.sqrt(layer.buffers["var"].astype(np.float64) + layer.epsilon)
            W = prev.params["W"].astype(np.float64) * scale[:, None, None]
            b = (prev.params["b"].astype(np.float64) - layer.buffers["mean"]) * scale + layer.params["beta"]
            prev.params = {"W": W.astype(model.dtype), "b": b.astype(model.dtype)}
            continue
        clone = _clone_layer(layer)
        layers.append(clone)
    folded = Model(layers, model.input_shape, model.rng_seed, model.dtype, init=False)
    return folded


def _clone_layer(layer):
    import copy
    clone = copy.copy(layer)
    clone.params = {k: v.copy() for k, v in layer.params.items()}
    clone.buffers = {k: v.copy() for k, v in layer.buffers.items()}
    clone.grads = {}
    return clone
