"""Cost oracles that measure an instantiated model instead of reading the genome."""

from __future__ import annotations

import numpy as np

from tinytc.arch.genome import instantiate


def measure(genome, input_len: int = 784):
    """Run one sample through the real model and tally params, peak tensor and FLOPs."""
    model = instantiate(genome, input_len, seed=0)
    params = sum(v.size for v in model.named_params().values())
    h = np.zeros((1, 1, input_len), np.float32)
    peak, flops = h[0].size, 0
    for layer in model.layers:
        x = h
        h = layer.forward(x, False)
        n_out = h[0].size
        kind = layer.kind
        if kind == "conv1d":
            flops += n_out * (2 * layer.kernel * x.shape[1] + 1)
        elif kind == "batchnorm":
            flops += 2 * n_out
        elif kind in ("relu",):
            flops += n_out
        elif kind in ("maxpool1d", "avgpool1d", "gap"):
            flops += x[0].size
        elif kind == "dense":
            flops += 2 * x.shape[1] * n_out + n_out
        elif kind == "softmax":
            flops += 3 * n_out
        peak = max(peak, n_out)
    return params, peak, flops
