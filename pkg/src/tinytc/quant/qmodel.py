"""Per-tensor INT8 post-training quantization and the integer inference path.

Weights are symmetric int8 (zero point 0, scale = max|w| / 127). Activations
are asymmetric uint8 with a range that always contains zero. Conv and dense
layers accumulate in int32, add an int32 bias at scale ``s_in * s_w`` and
requantize with a 32-bit fixed-point multiplier and rounding right shift
(round half away from zero). A ReLU directly after conv/dense is fused by
clamping at the output zero point. Pooling layers work on the uint8 codes
and keep their input's quantization parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from tinytc.errors import UnsupportedTopology
from tinytc.nn.layers import (
    AvgPool1D,
    BatchNorm,
    Conv1D,
    Dense,
    Dropout,
    GlobalAvgPool,
    MaxPool1D,
    ReLU,
    Softmax,
    same_padding,
    softmax,
)
from tinytc.quant.calibrate import CalibrationStats

SCALE_FLOOR = 1e-8
QMIN, QMAX = 0, 255
WMAX = 127
INT32_MIN, INT32_MAX = -(2 ** 31), 2 ** 31 - 1


def round_half_away(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int
    signed: bool = False

    def quantize(self, x) -> np.ndarray:
        lo, hi = (-WMAX, WMAX) if self.signed else (QMIN, QMAX)
        q = round_half_away(np.asarray(x, dtype=np.float64) / self.scale) + self.zero_point
        return np.clip(q, lo, hi).astype(np.int8 if self.signed else np.uint8)

    def dequantize(self, q) -> np.ndarray:
        return (np.asarray(q, dtype=np.float64) - self.zero_point) * self.scale


def weight_qparams(w: np.ndarray) -> QuantParams:
    scale = float(np.max(np.abs(w))) / WMAX if w.size else 0.0
    return QuantParams(max(scale, SCALE_FLOOR), 0, signed=True)


def activation_qparams(lo: float, hi: float) -> QuantParams:
    lo, hi = min(float(lo), 0.0), max(float(hi), 0.0)
    scale = max((hi - lo) / (QMAX - QMIN), SCALE_FLOOR)
    zp = int(np.clip(round_half_away(-lo / scale), QMIN, QMAX))
    return QuantParams(scale, zp, signed=False)


def quantize_multiplier(m: float) -> tuple[int, int]:
    """``m ~= multiplier / 2**shift`` with ``multiplier`` in [2**30, 2**31)."""
    if m <= 0:
        return 0, 0
    mant, exp = math.frexp(m)
    q = int(round(mant * (1 << 31)))
    if q == 1 << 31:
        q //= 2
        exp += 1
    return q, 31 - exp


def rounding_rshift(v: np.ndarray, shift: int) -> np.ndarray:
    if shift <= 0:
        return v << -shift
    a = np.abs(v)
    return np.sign(v) * ((a + (1 << (shift - 1))) >> shift)


def requantize(acc: np.ndarray, multiplier: int, shift: int, zero_point: int, lower: int = QMIN) -> np.ndarray:
    out = rounding_rshift(acc.astype(np.int64) * multiplier, shift) + zero_point
    return np.clip(out, lower, QMAX).astype(np.uint8)


def _int_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # exact: operands are small integers and every partial sum stays below 2**53
    return np.rint(a.astype(np.float64) @ b.astype(np.float64)).astype(np.int64)


@dataclass
class QConv1D:
    kind = "qconv1d"
    in_ch: int
    out_ch: int
    kernel: int
    stride: int
    padding: str
    weight: np.ndarray                  # int8 (out, in, k)
    bias: np.ndarray                    # int32 (out,)
    w_qp: QuantParams
    in_qp: QuantParams
    out_qp: QuantParams
    multiplier: int
    shift: int
    relu: bool

    def __call__(self, x: np.ndarray) -> np.ndarray:
        B, C, L = x.shape
        x = x.astype(np.int32) - self.in_qp.zero_point
        if self.padding == "same":
            left, right = same_padding(L, self.kernel, self.stride)
            x = np.pad(x, ((0, 0), (0, 0), (left, right)))
            lout = -(-L // self.stride)
        else:
            lout = (L - self.kernel) // self.stride + 1
        win = np.lib.stride_tricks.sliding_window_view(x, self.kernel, axis=2)[:, :, ::self.stride][:, :, :lout]
        cols = win.transpose(1, 3, 0, 2).reshape(C * self.kernel, B * lout)
        acc = _int_matmul(self.weight.reshape(self.out_ch, -1), cols) + self.bias.astype(np.int64)[:, None]
        lower = self.out_qp.zero_point if self.relu else QMIN
        y = requantize(acc, self.multiplier, self.shift, self.out_qp.zero_point, lower)
        return np.ascontiguousarray(y.reshape(self.out_ch, B, lout).transpose(1, 0, 2))


@dataclass
class QDense:
    kind = "qdense"
    n_in: int
    n_out: int
    weight: np.ndarray                  # int8 (in, out)
    bias: np.ndarray                    # int32 (out,)
    w_qp: QuantParams
    in_qp: QuantParams
    out_qp: QuantParams
    multiplier: int
    shift: int
    relu: bool

    def __call__(self, x):
        acc = _int_matmul(x.astype(np.int32) - self.in_qp.zero_point, self.weight) + self.bias.astype(np.int64)
        lower = self.out_qp.zero_point if self.relu else QMIN
        return requantize(acc, self.multiplier, self.shift, self.out_qp.zero_point, lower)


@dataclass
class QMaxPool1D:
    kind = "qmaxpool1d"
    size: int

    def __call__(self, x):
        B, C, L = x.shape
        lout = L // self.size
        return x[:, :, :lout * self.size].reshape(B, C, lout, self.size).max(axis=3)


def _rounded_mean(x: np.ndarray, axis: int) -> np.ndarray:
    n = x.shape[axis]
    s = x.astype(np.int64).sum(axis=axis)
    return ((s + n // 2) // n).astype(np.uint8)


@dataclass
class QAvgPool1D:
    kind = "qavgpool1d"
    size: int

    def __call__(self, x):
        B, C, L = x.shape
        lout = L // self.size
        return _rounded_mean(x[:, :, :lout * self.size].reshape(B, C, lout, self.size), 3)


@dataclass
class QGlobalAvgPool:
    kind = "qgap"

    def __call__(self, x):
        return _rounded_mean(x, 2)


@dataclass
class QReLU:
    kind = "qrelu"
    zero_point: int

    def __call__(self, x):
        return np.maximum(x, np.uint8(self.zero_point))


@dataclass
class QuantModel:
    input_shape: tuple[int, ...]
    input_qp: QuantParams
    ops: list = field(default_factory=list)

    @property
    def output_qp(self) -> QuantParams:
        return self.ops[-1].out_qp

    @property
    def n_classes(self) -> int:
        return self.ops[-1].n_out

    @property
    def layers(self):
        return self.ops

    def n_weight_bytes(self) -> int:
        return sum(op.weight.size + 4 * op.bias.size for op in self.ops if hasattr(op, "weight"))

    def quantize_input(self, X) -> np.ndarray:
        X = np.asarray(X)
        if X.ndim == 2 and self.input_shape[0] == 1:
            X = X[:, None, :]
        if X.ndim == 1:
            X = X.reshape((1,) + self.input_shape)
        return self.input_qp.quantize(X)

    def int_logits(self, X) -> np.ndarray:
        h = self.quantize_input(X)
        for op in self.ops:
            h = op(h)
        return h

    def logits(self, X) -> np.ndarray:
        return self.output_qp.dequantize(self.int_logits(X))

    def predict_proba(self, X, batch_size: int = 512) -> np.ndarray:
        X = np.asarray(X)
        parts = [softmax(self.logits(X[i:i + batch_size])) for i in range(0, len(X), batch_size)]
        return np.concatenate(parts) if parts else np.zeros((0, self.n_classes))

    def predict(self, X, batch_size: int = 512) -> np.ndarray:
        return self.predict_proba(X, batch_size).argmax(axis=1)


def _quantize_affine(W, b, in_qp, out_qp):
    w_qp = weight_qparams(W)
    wq = w_qp.quantize(W)
    bias_scale = in_qp.scale * w_qp.scale
    bq = np.clip(round_half_away(np.asarray(b, dtype=np.float64) / bias_scale), INT32_MIN, INT32_MAX).astype(np.int32)
    mult, shift = quantize_multiplier(bias_scale / out_qp.scale)
    return wq, bq, w_qp, mult, shift


def quantize_model(model, stats: CalibrationStats) -> QuantModel:
    """Convert a BatchNorm-free model (see :func:`fold_batchnorm`) to integer ops."""
    layers = model.layers
    if len(stats) != len(layers) + 1:
        raise ValueError("calibration statistics do not match the model's edges")
    qp = activation_qparams(*stats.edge(0))
    qm = QuantModel(tuple(model.input_shape), qp)
    i = 0
    while i < len(layers):
        layer = layers[i]
        if isinstance(layer, BatchNorm):
            raise UnsupportedTopology("fold batch norm before quantizing")
        if isinstance(layer, (Conv1D, Dense)):
            fuse = i + 1 < len(layers) and isinstance(layers[i + 1], ReLU)
            out_edge = i + 2 if fuse else i + 1
            out_qp = activation_qparams(*stats.edge(out_edge))
            W, b = layer.params["W"], layer.params["b"]
            wq, bq, w_qp, mult, shift = _quantize_affine(W, b, qp, out_qp)
            if isinstance(layer, Conv1D):
                op = QConv1D(layer.in_ch, layer.out_ch, layer.kernel, layer.stride, layer.padding,
                             wq, bq, w_qp, qp, out_qp, mult, shift, fuse)
            else:
                op = QDense(layer.n_in, layer.n_out, wq, bq, w_qp, qp, out_qp, mult, shift, fuse)
            qm.ops.append(op)
            qp = out_qp
            i = out_edge
            continue
        if isinstance(layer, ReLU):
            qm.ops.append(QReLU(qp.zero_point))
        elif isinstance(layer, MaxPool1D):
            qm.ops.append(QMaxPool1D(layer.size))
        elif isinstance(layer, AvgPool1D):
            qm.ops.append(QAvgPool1D(layer.size))
        elif isinstance(layer, GlobalAvgPool):
            qm.ops.append(QGlobalAvgPool())
        elif isinstance(layer, (Dropout, Softmax)):
            pass
        else:
            raise UnsupportedTopology(f"no integer kernel for {type(layer).__name__}")
        i += 1
    if not qm.ops or not isinstance(qm.ops[-1], QDense):
        raise UnsupportedTopology("quantized graph must end with a dense layer")
    return qm


def quantized_forward(qmodel: QuantModel, X) -> np.ndarray:
    """Class probabilities from the integer path (softmax on dequantized logits)."""
    return qmodel.predict_proba(np.asarray(X))
