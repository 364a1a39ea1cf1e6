"""Central finite-difference check of :meth:`Model.backward`."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tinytc.nn.model import Model, cross_entropy

DENOM_FLOOR = 1e-8


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    n_checked: int


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), DENOM_FLOOR)


def numeric_gradients(model: Model, X, y, step: float = 1e-4, mask_seed: int = 0) -> dict[str, np.ndarray]:
    """Central differences of the train-mode loss; dropout masks are pinned via ``mask_seed``."""
    def loss() -> float:
        model.reseed(mask_seed)
        return cross_entropy(model.forward(X, "train"), y)

    out = {}
    for name, p in model.named_params().items():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss()
            flat[i] = orig - step
            down = loss()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        out[name] = g
    return out


def check_gradients(model: Model, X, y, step: float = 1e-4, mask_seed: int = 0) -> GradCheckResult:
    if model.dtype != np.float64:
        model = model.astype(np.float64)
    model.reseed(mask_seed)
    model.forward(X, "train")
    analytic = model.backward(y)
    numeric = numeric_gradients(model, X, y, step, mask_seed)
    worst, worst_name, count = 0.0, "", 0
    for name, g in analytic.items():
        err = relative_error(g, numeric[name])
        count += err.size
        if err.size and err.max() > worst:
            worst, worst_name = float(err.max()), name
    return GradCheckResult(worst, worst_name, count)


def random_micro_model(rng: np.random.Generator, n_classes: int | None = None) -> tuple[Model, np.ndarray, np.ndarray]:
    """A small float64 model that contains every layer type, plus a batch to check it on.

    Two conv blocks (random padding) feed max and average pooling, dropout,
    global pooling, a dense head and softmax.
    """
    from tinytc.nn.layers import AvgPool1D, BatchNorm, Conv1D, Dense, Dropout, GlobalAvgPool, MaxPool1D, ReLU, Softmax

    c_in = int(rng.integers(1, 3))
    length = int(rng.integers(16, 33))
    k = n_classes or int(rng.integers(2, 5))
    f1, f2 = (int(v) for v in rng.integers(2, 5, size=2))
    pads = rng.choice(["valid", "same"], size=2)
    layers = [
        Conv1D(c_in, f1, int(rng.integers(1, 4)), int(rng.integers(1, 3)), str(pads[0])),
        BatchNorm(f1), ReLU(), MaxPool1D(2), Dropout(float(rng.choice([0.0, 0.25]))),
        Conv1D(f1, f2, int(rng.integers(1, 3)), 1, str(pads[1])),
        ReLU(), AvgPool1D(2), Dropout(0.2),
        GlobalAvgPool(), Dense(f2, k), Softmax(),
    ]
    model = Model(layers, (c_in, length), rng_seed=int(rng.integers(2**31)), dtype=np.float64)
    # zero-initialised biases put all-zero windows exactly on the ReLU kink,
    # where central differences are meaningless
    for layer in model.layers:
        for name in ("b", "beta"):
            if name in layer.params:
                layer.params[name] = rng.normal(0.0, 0.5, size=layer.params[name].shape)
    batch = int(rng.integers(2, 5))
    X = rng.standard_normal((batch, c_in, length))
    y = rng.integers(0, k, size=batch)
    return model, X, y
