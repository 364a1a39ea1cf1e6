"""Binary model file (float32 or INT8).

Layout, all little-endian::

    magic      4s   b"MTCM"
    version    u16
    precision  u8   0 = float32, 1 = int8
    ndim       u8   followed by ndim x u32 input dims
    extra           f32: i64 rng seed; int8: f64 input scale, i32 input zero point
    n_layers   u32
    layer table     per layer: u8 tag, u8 n_int, u8 n_float, n_int x i64, n_float x f64
    blobs           per layer: u8 n_blobs, then per blob u8 dtype, u8 ndim, ndim x u32, raw data
    crc32      u32  over every preceding byte

Integer layers store the requantization multiplier and right shift exactly,
so a loaded model reproduces the saved one bit for bit.
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib

import numpy as np

from tinytc.errors import ChecksumMismatch, IoFailure, ModelBadMagic, ModelFileError, VersionUnsupported
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
)
from tinytc.nn.model import Model
from tinytc.quant.qmodel import (
    QAvgPool1D,
    QConv1D,
    QDense,
    QGlobalAvgPool,
    QMaxPool1D,
    QReLU,
    QuantModel,
    QuantParams,
)

MAGIC = b"MTCM"
VERSION = 1
PRECISION_F32, PRECISION_INT8 = 0, 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("i1"), 2: np.dtype("<i4")}
_DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("int8"): 1, np.dtype("int32"): 2}
_PADDING = ("valid", "same")

_FLOAT_TAGS = {"conv1d": 1, "batchnorm": 2, "relu": 3, "maxpool1d": 4, "avgpool1d": 5,
               "dropout": 6, "gap": 7, "dense": 8, "softmax": 9}
_QUANT_TAGS = {"qconv1d": 17, "qdense": 18, "qmaxpool1d": 19, "qavgpool1d": 20, "qgap": 21, "qrelu": 22}


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def pack(self, fmt: str, *values):
        self.parts.append(struct.pack("<" + fmt, *values))

    def blob(self, arr: np.ndarray):
        arr = np.asarray(arr)
        code = _DTYPE_CODES[arr.dtype]
        self.pack("BB", code, arr.ndim)
        self.pack(f"{arr.ndim}I", *arr.shape)
        self.parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def unpack(self, fmt: str):
        size = struct.calcsize("<" + fmt)
        if self.pos + size > len(self.buf):
            raise ModelFileError("model file ends early")
        vals = struct.unpack_from("<" + fmt, self.buf, self.pos)
        self.pos += size
        return vals

    def blob(self) -> np.ndarray:
        code, ndim = self.unpack("BB")
        if code not in _DTYPES:
            raise ModelFileError(f"unknown blob dtype code {code}")
        shape = self.unpack(f"{ndim}I")
        dt = _DTYPES[code]
        n = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if self.pos + n > len(self.buf):
            raise ModelFileError("model file ends early")
        arr = np.frombuffer(self.buf, dt, count=n // dt.itemsize, offset=self.pos).reshape(shape)
        self.pos += n
        return arr.astype(dt.newbyteorder("="))


# float layers --------------------------------------------------------------

def _float_entry(layer):
    if isinstance(layer, Conv1D):
        return ([layer.in_ch, layer.out_ch, layer.kernel, layer.stride, _PADDING.index(layer.padding)], [],
                [layer.params["W"], layer.params["b"]])
    if isinstance(layer, BatchNorm):
        return ([layer.channels], [layer.epsilon, layer.momentum],
                [layer.params["gamma"], layer.params["beta"], layer.buffers["mean"], layer.buffers["var"]])
    if isinstance(layer, (MaxPool1D, AvgPool1D)):
        return [layer.size], [], []
    if isinstance(layer, Dropout):
        return [], [layer.rate], []
    if isinstance(layer, Dense):
        return [layer.n_in, layer.n_out], [], [layer.params["W"], layer.params["b"]]
    return [], [], []


def _float_layer(tag, ints, floats, blobs):
    kind = {v: k for k, v in _FLOAT_TAGS.items()}.get(tag)
    if kind == "conv1d":
        layer = Conv1D(ints[0], ints[1], ints[2], ints[3], _PADDING[ints[4]])
        layer.params = {"W": blobs[0], "b": blobs[1]}
    elif kind == "batchnorm":
        layer = BatchNorm(ints[0], floats[0], floats[1])
        layer.params = {"gamma": blobs[0], "beta": blobs[1]}
        layer.buffers = {"mean": blobs[2], "var": blobs[3]}
    elif kind == "relu":
        layer = ReLU()
    elif kind == "maxpool1d":
        layer = MaxPool1D(ints[0])
    elif kind == "avgpool1d":
        layer = AvgPool1D(ints[0])
    elif kind == "dropout":
        layer = Dropout(floats[0])
    elif kind == "gap":
        layer = GlobalAvgPool()
    elif kind == "dense":
        layer = Dense(ints[0], ints[1])
        layer.params = {"W": blobs[0], "b": blobs[1]}
    elif kind == "softmax":
        layer = Softmax()
    else:
        raise ModelFileError(f"unknown float layer tag {tag}")
    return layer


# integer layers ------------------------------------------------------------

def _affine_fields(op):
    return ([op.multiplier, op.shift, int(op.relu), op.in_qp.zero_point, op.out_qp.zero_point],
            [op.w_qp.scale, op.in_qp.scale, op.out_qp.scale])


def _quant_entry(op):
    if isinstance(op, QConv1D):
        ints, floats = _affine_fields(op)
        return ([op.in_ch, op.out_ch, op.kernel, op.stride, _PADDING.index(op.padding)] + ints, floats,
                [op.weight, op.bias])
    if isinstance(op, QDense):
        ints, floats = _affine_fields(op)
        return [op.n_in, op.n_out] + ints, floats, [op.weight, op.bias]
    if isinstance(op, (QMaxPool1D, QAvgPool1D)):
        return [op.size], [], []
    if isinstance(op, QReLU):
        return [op.zero_point], [], []
    return [], [], []


def _quant_layer(tag, ints, floats, blobs):
    kind = {v: k for k, v in _QUANT_TAGS.items()}.get(tag)
    if kind in ("qconv1d", "qdense"):
        head, (mult, shift, relu, in_zp, out_zp) = (ints[:5], ints[5:]) if kind == "qconv1d" else (ints[:2], ints[2:])
        w_qp = QuantParams(floats[0], 0, signed=True)
        in_qp, out_qp = QuantParams(floats[1], in_zp), QuantParams(floats[2], out_zp)
        if kind == "qconv1d":
            return QConv1D(*head[:4], _PADDING[head[4]], blobs[0], blobs[1], w_qp, in_qp, out_qp, mult, shift, bool(relu))
        return QDense(*head, blobs[0], blobs[1], w_qp, in_qp, out_qp, mult, shift, bool(relu))
    if kind == "qmaxpool1d":
        return QMaxPool1D(ints[0])
    if kind == "qavgpool1d":
        return QAvgPool1D(ints[0])
    if kind == "qgap":
        return QGlobalAvgPool()
    if kind == "qrelu":
        return QReLU(ints[0])
    raise ModelFileError(f"unknown int8 layer tag {tag}")


# public API ----------------------------------------------------------------

def encode_model(model: Model | QuantModel) -> bytes:
    w = _Writer()
    quant = isinstance(model, QuantModel)
    w.pack("4sHB", MAGIC, VERSION, PRECISION_INT8 if quant else PRECISION_F32)
    shape = tuple(model.input_shape)
    w.pack("B", len(shape))
    w.pack(f"{len(shape)}I", *shape)
    if quant:
        w.pack("di", model.input_qp.scale, model.input_qp.zero_point)
        layers, tags, entry = model.ops, _QUANT_TAGS, _quant_entry
    else:
        w.pack("q", model.rng_seed)
        layers, tags, entry = model.layers, _FLOAT_TAGS, _float_entry
    w.pack("I", len(layers))
    entries = [entry(layer) for layer in layers]
    for layer, (ints, floats, _) in zip(layers, entries):
        w.pack("BBB", tags[layer.kind], len(ints), len(floats))
        w.pack(f"{len(ints)}q", *ints)
        w.pack(f"{len(floats)}d", *floats)
    for _, _, blobs in entries:
        w.pack("B", len(blobs))
        for b in blobs:
            if not quant:
                b = np.asarray(b, dtype=np.float32)
            w.blob(b)
    body = w.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def decode_model(buf: bytes) -> Model | QuantModel:
    if len(buf) < 7 or buf[:4] != MAGIC:
        raise ModelBadMagic("not a model file")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != VERSION:
        raise VersionUnsupported(f"model file version {version}, this build reads {VERSION}")
    if len(buf) < 11 or zlib.crc32(buf[:-4]) != struct.unpack_from("<I", buf, len(buf) - 4)[0]:
        raise ChecksumMismatch("model file checksum does not verify")
    r = _Reader(buf[:-4])
    r.pos = 6
    (precision, ndim) = r.unpack("BB")
    shape = r.unpack(f"{ndim}I")
    if precision == PRECISION_INT8:
        scale, zp = r.unpack("di")
    elif precision == PRECISION_F32:
        (seed,) = r.unpack("q")
    else:
        raise ModelFileError(f"unknown precision flag {precision}")
    (n_layers,) = r.unpack("I")
    table = []
    for _ in range(n_layers):
        tag, n_int, n_float = r.unpack("BBB")
        table.append((tag, r.unpack(f"{n_int}q"), r.unpack(f"{n_float}d")))
    built = []
    for tag, ints, floats in table:
        (n_blobs,) = r.unpack("B")
        blobs = [r.blob() for _ in range(n_blobs)]
        make = _quant_layer if precision == PRECISION_INT8 else _float_layer
        built.append(make(tag, list(ints), list(floats), blobs))
    if r.pos != len(r.buf):
        raise ModelFileError("trailing bytes after model payload")
    if precision == PRECISION_INT8:
        return QuantModel(tuple(shape), QuantParams(scale, zp), built)
    return Model(built, tuple(shape), seed, np.float32, init=False)


def atomic_write(path, data: bytes) -> int:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return len(data)


def save_model(model: Model | QuantModel, path) -> int:
    """Write ``model`` atomically; returns the number of bytes written."""
    return atomic_write(path, encode_model(model))


def load_model(path) -> Model | QuantModel:
    with open(path, "rb") as fh:
        return decode_model(fh.read())
