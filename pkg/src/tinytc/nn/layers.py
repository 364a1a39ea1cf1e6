"""Layers of the 1D-CNN engine.

Activations are laid out ``(batch, channels, length)``; the head works on
``(batch, features)``. Each layer caches what its backward pass needs during a
train-mode forward and writes parameter gradients into ``self.grads``.
"""

from __future__ import annotations

import math

import numpy as np

from tinytc.errors import CollapsedWidth, ShapeMismatch


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return shape

    def init_params(self, rng: np.random.Generator, dtype) -> None:
        pass

    def forward(self, x: np.ndarray, train: bool, rng: np.random.Generator | None = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def config(self) -> dict:
        return {}

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{type(self).__name__}({args})"


def _he_uniform(rng, shape, fan_in, dtype):
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def conv_output_length(length: int, kernel: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-length // stride)
    return (length - kernel) // stride + 1 if length >= kernel else 0


def same_padding(length: int, kernel: int, stride: int) -> tuple[int, int]:
    out = -(-length // stride)
    total = max((out - 1) * stride + kernel - length, 0)
    return total // 2, total - total // 2


class Conv1D(Layer):
    kind = "conv1d"

    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int = 1, padding: str = "valid"):
        super().__init__()
        if kernel < 1 or stride < 1:
            raise ValueError("kernel and stride must be >= 1")
        if padding not in ("same", "valid"):
            raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")
        self.in_ch, self.out_ch, self.kernel, self.stride, self.padding = in_ch, out_ch, kernel, stride, padding
        self._cache = None

    def config(self):
        return dict(in_ch=self.in_ch, out_ch=self.out_ch, kernel=self.kernel, stride=self.stride, padding=self.padding)

    def output_shape(self, shape):
        c, length = shape
        if c != self.in_ch:
            raise ShapeMismatch(f"conv expects {self.in_ch} input channels, got {c}")
        out = conv_output_length(length, self.kernel, self.stride, self.padding)
        if out < 1:
            raise CollapsedWidth(f"conv k={self.kernel} s={self.stride} on length {length}")
        return (self.out_ch, out)

    def init_params(self, rng, dtype):
        fan_in = self.in_ch * self.kernel
        self.params = {
            "W": _he_uniform(rng, (self.out_ch, self.in_ch, self.kernel), fan_in, dtype),
            "b": np.zeros(self.out_ch, dtype=dtype),
        }

    def _columns(self, x):
        B, C, L = x.shape
        _, lout = self.output_shape((C, L))
        if self.padding == "same":
            left, right = same_padding(L, self.kernel, self.stride)
            if left or right:
                x = np.pad(x, ((0, 0), (0, 0), (left, right)))
        windows = np.lib.stride_tricks.sliding_window_view(x, self.kernel, axis=2)[:, :, ::self.stride][:, :, :lout]
        # (B, C, Lout, k) -> (C*k, B*Lout)
        cols = windows.transpose(1, 3, 0, 2).reshape(C * self.kernel, B * lout)
        return cols, lout, x.shape[2]

    def forward(self, x, train, rng=None):
        B = x.shape[0]
        cols, lout, padded_len = self._columns(x)
        W = self.params["W"].reshape(self.out_ch, -1)
        y = (W @ cols).reshape(self.out_ch, B, lout).transpose(1, 0, 2)
        y = y + self.params["b"][None, :, None]
        if train:
            self._cache = (cols, x.shape, lout, padded_len)
        return np.ascontiguousarray(y)

    def backward(self, dy):
        cols, xshape, lout, padded_len = self._cache
        B, C, L = xshape
        dyt = dy.transpose(1, 0, 2).reshape(self.out_ch, B * lout)
        self.grads = {
            "W": (dyt @ cols.T).reshape(self.params["W"].shape),
            "b": dyt.sum(axis=1),
        }
        dcols = (self.params["W"].reshape(self.out_ch, -1).T @ dyt).reshape(C, self.kernel, B, lout)
        dxp = np.zeros((B, C, padded_len), dtype=dy.dtype)
        span = self.stride * (lout - 1) + 1
        for j in range(self.kernel):
            dxp[:, :, j:j + span:self.stride] += dcols[:, j].transpose(1, 0, 2)
        if self.padding == "same":
            left, _ = same_padding(L, self.kernel, self.stride)
            dxp = dxp[:, :, left:left + L]
        self._cache = None
        return dxp


class BatchNorm(Layer):
    kind = "batchnorm"

    def __init__(self, channels: int, epsilon: float = 1e-3, momentum: float = 0.99):
        super().__init__()
        self.channels, self.epsilon, self.momentum = channels, epsilon, momentum
        self._cache = None
        self._ema = None
        self._steps = 0

    def config(self):
        return dict(channels=self.channels, epsilon=self.epsilon, momentum=self.momentum)

    def output_shape(self, shape):
        if shape[0] != self.channels:
            raise ShapeMismatch(f"batchnorm expects {self.channels} channels, got {shape[0]}")
        return shape

    def init_params(self, rng, dtype):
        self.params = {"gamma": np.ones(self.channels, dtype), "beta": np.zeros(self.channels, dtype)}
        self.buffers = {"mean": np.zeros(self.channels, dtype), "var": np.ones(self.channels, dtype)}

    def forward(self, x, train, rng=None):
        g, b = self.params["gamma"][None, :, None], self.params["beta"][None, :, None]
        if not train:
            inv = 1.0 / np.sqrt(self.buffers["var"] + self.epsilon)
            return (x - self.buffers["mean"][None, :, None]) * (inv[None, :, None] * g) + b
        mean = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        inv = (1.0 / np.sqrt(var + self.epsilon)).astype(x.dtype)
        xhat = (x - mean[None, :, None]) * inv[None, :, None]
        self._update_running(mean, var)
        self._cache = (xhat, inv)
        return xhat * g + b

    def _update_running(self, mean, var):
        # zero-initialised EMA with bias correction, so the estimate is usable
        # after a handful of steps (small datasets give few steps per epoch)
        m = self.momentum
        if self._ema is None:
            self._ema = (np.zeros_like(mean, dtype=np.float64), np.zeros_like(var, dtype=np.float64))
            self._steps = 0
        ema_mean, ema_var = self._ema
        ema_mean *= m
        ema_mean += (1 - m) * mean
        ema_var *= m
        ema_var += (1 - m) * var
        self._steps += 1
        correction = 1.0 - m ** self._steps
        dtype = self.buffers["mean"].dtype
        self.buffers["mean"] = (ema_mean / correction).astype(dtype)
        self.buffers["var"] = (ema_var / correction).astype(dtype)

    def backward(self, dy):
        xhat, inv = self._cache
        n = dy.shape[0] * dy.shape[2]
        self.grads = {"gamma": (dy * xhat).sum(axis=(0, 2)), "beta": dy.sum(axis=(0, 2))}
        dxhat = dy * self.params["gamma"][None, :, None]
        s1 = dxhat.sum(axis=(0, 2), keepdims=True)
        s2 = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
        self._cache = None
        return (inv[None, :, None] / n) * (n * dxhat - s1 - xhat * s2)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train, rng=None):
        y = np.maximum(x, 0)
        if train:
            self._mask = x > 0
        return y

    def backward(self, dy):
        return dy * self._mask


class _Pool(Layer):
    def __init__(self, size: int):
        super().__init__()
        if size < 1:
            raise ValueError("pool size must be >= 1")
        self.size = size

    def config(self):
        return dict(size=self.size)

    def output_shape(self, shape):
        c, length = shape
        out = length // self.size
        if out < 1:
            raise CollapsedWidth(f"pool size {self.size} on length {length}")
        return (c, out)

    def _blocks(self, x):
        B, C, L = x.shape
        lout = L // self.size
        return x[:, :, :lout * self.size].reshape(B, C, lout, self.size)


class MaxPool1D(_Pool):
    kind = "maxpool1d"

    def forward(self, x, train, rng=None):
        blocks = self._blocks(x)
        idx = blocks.argmax(axis=3)
        if train:
            self._cache = (x.shape, idx)
        return np.take_along_axis(blocks, idx[..., None], axis=3)[..., 0]

    def backward(self, dy):
        shape, idx = self._cache
        B, C, L = shape
        lout = dy.shape[2]
        dblocks = np.zeros((B, C, lout, self.size), dtype=dy.dtype)
        np.put_along_axis(dblocks, idx[..., None], dy[..., None], axis=3)
        dx = np.zeros(shape, dtype=dy.dtype)
        dx[:, :, :lout * self.size] = dblocks.reshape(B, C, -1)
        return dx


class AvgPool1D(_Pool):
    kind = "avgpool1d"

    def forward(self, x, train, rng=None):
        if train:
            self._shape = x.shape
        return self._blocks(x).mean(axis=3)

    def backward(self, dy):
        B, C, L = self._shape
        lout = dy.shape[2]
        dx = np.zeros(self._shape, dtype=dy.dtype)
        dx[:, :, :lout * self.size] = np.repeat(dy / self.size, self.size, axis=2)
        return dx


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by 1/(1-rate) while training."""

    kind = "dropout"

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate

    def config(self):
        return dict(rate=self.rate)

    def forward(self, x, train, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        keep = rng.random(x.shape) >= self.rate
        self._mask = keep.astype(x.dtype) / x.dtype.type(1.0 - self.rate)
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


class GlobalAvgPool(Layer):
    kind = "gap"

    def output_shape(self, shape):
        return (shape[0],)

    def forward(self, x, train, rng=None):
        if train:
            self._length = x.shape[2]
        return x.mean(axis=2)

    def backward(self, dy):
        return np.repeat(dy[:, :, None] / self._length, self._length, axis=2)


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out

    def config(self):
        return dict(n_in=self.n_in, n_out=self.n_out)

    def output_shape(self, shape):
        if shape != (self.n_in,):
            raise ShapeMismatch(f"dense expects ({self.n_in},), got {shape}")
        return (self.n_out,)

    def init_params(self, rng, dtype):
        self.params = {
            "W": _he_uniform(rng, (self.n_in, self.n_out), self.n_in, dtype),
            "b": np.zeros(self.n_out, dtype=dtype),
        }

    def forward(self, x, train, rng=None):
        if train:
            self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        self.grads = {"W": self._x.T @ dy, "b": dy.sum(axis=0)}
        return dy @ self.params["W"].T


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, train, rng=None):
        p = softmax(x)
        if train:
            self._p = p
        return p

    def backward(self, dy):
        p = self._p
        return p * (dy - (dy * p).sum(axis=1, keepdims=True))


LAYER_TYPES = {cls.kind: cls for cls in (Conv1D, BatchNorm, ReLU, MaxPool1D, AvgPool1D, Dropout,
                                         GlobalAvgPool, Dense, Softmax)}
