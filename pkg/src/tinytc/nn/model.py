from __future__ import annotations

import copy

import numpy as np

from tinytc.errors import ShapeMismatch, StaleCache
from tinytc.nn.layers import Dense, GlobalAvgPool, Layer, Softmax

PROB_FLOOR = 1e-12


class Model:
    """Sequential network ending in ``GlobalAvgPool -> Dense -> Softmax``.

    ``input_shape`` is the per-sample ``(channels, length)``. Dropout masks are
    drawn from the model's own generator, seeded from ``rng_seed``.
    """

    def __init__(self, layers: list[Layer], input_shape=(1, 784), rng_seed: int = 0,
                 dtype=np.float32, init: bool = True):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.rng_seed = int(rng_seed)
        self.dtype = np.dtype(dtype)
        self._check_topology()
        self.shapes = self._infer_shapes()
        if init:
            init_rng = np.random.default_rng([self.rng_seed, 0])
            for layer in self.layers:
                layer.init_params(init_rng, self.dtype)
        self.reseed(self.rng_seed)
        self._cache_batch: int | None = None
        self._probs = None
        self._logits = None

    def _check_topology(self):
        kinds = [type(l) for l in self.layers]
        if kinds[-3:] != [GlobalAvgPool, Dense, Softmax]:
            raise ShapeMismatch("model must end with GlobalAvgPool, Dense, Softmax")
        for cls in (GlobalAvgPool, Dense, Softmax):
            if kinds.count(cls) != 1:
                raise ShapeMismatch(f"model must contain exactly one {cls.__name__}")

    def _infer_shapes(self) -> list[tuple[int, ...]]:
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.output_shape(shapes[-1]))
        return shapes

    @property
    def n_classes(self) -> int:
        return self.shapes[-1][0]

    def reseed(self, seed: int) -> None:
        self.rng = np.random.default_rng([int(seed), 1])

    # parameters ---------------------------------------------------------

    def named_params(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, l in enumerate(self.layers) for k, v in l.params.items()}

    def named_buffers(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, l in enumerate(self.layers) for k, v in l.buffers.items()}

    def n_params(self) -> int:
        return sum(v.size for v in self.named_params().values())

    def get_state(self) -> dict[str, np.ndarray]:
        state = {k: v.copy() for k, v in self.named_params().items()}
        state.update({f"buffer:{k}": v.copy() for k, v in self.named_buffers().items()})
        return state

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        for name, value in state.items():
            store = "buffers" if name.startswith("buffer:") else "params"
            idx, key = name.removeprefix("buffer:").split(".", 1)
            target = getattr(self.layers[int(idx)], store)
            if target[key].shape != value.shape:
                raise ShapeMismatch(f"{name}: expected {target[key].shape}, got {value.shape}")
            target[key] = value.astype(self.dtype, copy=True)

    def copy(self) -> "Model":
        return copy.deepcopy(self)

    def astype(self, dtype) -> "Model":
        other = self.copy()
        other.dtype = np.dtype(dtype)
        for layer in other.layers:
            layer.params = {k: v.astype(dtype) for k, v in layer.params.items()}
            layer.buffers = {k: v.astype(dtype) for k, v in layer.buffers.items()}
        return other

    # passes -------------------------------------------------------------

    def _as_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim == 2 and self.input_shape[0] == 1:
            x = x[:, None, :]
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatch(f"expected batch of {self.input_shape}, got {x.shape[1:]}")
        return x.astype(self.dtype, copy=False)

    def forward(self, x: np.ndarray, mode: str = "infer") -> np.ndarray:
        """Class probabilities for a batch; ``mode`` is ``"train"`` or ``"infer"``."""
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        train = mode == "train"
        h = self._as_batch(x)
        for layer in self.layers[:-1]:
            h = layer.forward(h, train, self.rng)
        self._logits = h
        probs = self.layers[-1].forward(h, train)
        self._cache_batch = h.shape[0] if train else None
        self._probs = probs
        return probs

    def logits(self, x: np.ndarray) -> np.ndarray:
        self.forward(x, "infer")
        return self._logits

    def backward(self, labels: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of mean cross-entropy w.r.t. every trainable parameter.

        Must follow a train-mode :meth:`forward` on the same batch.
        """
        labels = np.asarray(labels)
        if self._cache_batch is None or self._cache_batch != labels.shape[0]:
            raise StaleCache("backward needs a matching train-mode forward")
        self._cache_batch = None
        B = labels.shape[0]
        dz = self._probs.copy()
        dz[np.arange(B), labels] -= 1.0
        dz /= B
        for layer in reversed(self.layers[:-1]):
            dz = layer.backward(dz)
        return {f"{i}.{k}": g for i, l in enumerate(self.layers) for k, g in l.grads.items()}

    def predict(self, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
        return self.predict_proba(x, batch_size).argmax(axis=1)

    def predict_proba(self, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
        parts = [self.forward(x[i:i + batch_size], "infer") for i in range(0, len(x), batch_size)]
        return np.concatenate(parts) if parts else np.zeros((0, self.n_classes), self.dtype)

    def __repr__(self) -> str:
        body = ",\n  ".join(repr(l) for l in self.layers)
        return f"Model(input_shape={self.input_shape}, [\n  {body}\n])"


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ShapeMismatch("cross_entropy expects probs (B, K) and labels (B,)")
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())
