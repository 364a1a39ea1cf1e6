import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tinytc.arch import instantiate, paper_architecture, random_genome
from tinytc.errors import EmptyCalibrationSet, EmptyDataset, UnsupportedTopology
from tinytc.nn import BatchNorm, Conv1D, Dense, Dropout, GlobalAvgPool, Model, ReLU, Softmax
from tinytc.quant import (
    QuantParams,
    activation_qparams,
    calibrate,
    compare,
    fold_batchnorm,
    quantize_model,
    quantized_forward,
    weight_qparams,
)
from tinytc.quant.qmodel import quantize_multiplier, round_half_away, rounding_rshift


def randomize_bn(model, rng):
    """Give every batch norm non-trivial statistics and affine parameters."""
    for layer in model.layers:
        if isinstance(layer, BatchNorm):
            c = layer.channels
            layer.params = {"gamma": rng.uniform(0.5, 2, c).astype(model.dtype),
                            "beta": rng.normal(0, 0.5, c).astype(model.dtype)}
            layer.buffers = {"mean": rng.normal(0, 0.3, c).astype(model.dtype),
                             "var": rng.uniform(0.2, 3, c).astype(model.dtype)}
    return model


def test_weight_qparams_example():
    qp = weight_qparams(np.linspace(-1.27, 1.27, 11))
    assert qp.scale == pytest.approx(0.01) and qp.zero_point == 0 and qp.signed


def test_activation_qparams_examples():
    qp = activation_qparams(0.0, 1.0)
    assert qp.scale == pytest.approx(1 / 255) and qp.zero_point == 0
    qp = activation_qparams(-1.0, 1.0)
    assert qp.zero_point == 128
    # the range is stretched to contain zero, so zero is exactly representable
    qp = activation_qparams(0.5, 2.0)
    assert qp.zero_point == 0 and qp.scale == pytest.approx(2 / 255)
    qp = activation_qparams(3.0, 3.0)
    assert qp.scale > 0
    assert activation_qparams(0.0, 0.0).scale == 1e-8


@settings(max_examples=100, deadline=None)
@given(lo=st.floats(-100, 0), span=st.floats(1e-3, 200), seed=st.integers(0, 9999))
def test_activation_round_trip_bound(lo, span, seed):
    qp = activation_qparams(lo, lo + span)
    x = np.random.default_rng(seed).uniform(lo, lo + span, 1000)
    err = np.abs(qp.dequantize(qp.quantize(x)) - x)
    lo_r, hi_r = (0 - qp.zero_point) * qp.scale, (255 - qp.zero_point) * qp.scale
    inside = (x >= lo_r) & (x <= hi_r)
    assert (err[inside] <= qp.scale / 2 * (1 + 1e-9)).all()


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 9999), mag=st.floats(1e-4, 1e3))
def test_weight_round_trip_bound(seed, mag):
    w = np.random.default_rng(seed).uniform(-mag, mag, 500)
    qp = weight_qparams(w)
    assert np.abs(qp.dequantize(qp.quantize(w)) - w).max() <= qp.scale / 2 * (1 + 1e-9)


def test_round_half_away_from_zero():
    np.testing.assert_array_equal(round_half_away([0.5, 1.5, 2.5, -0.5, -1.5, 0.49]), [1, 2, 3, -1, -2, 0])
    np.testing.assert_array_equal(rounding_rshift(np.array([3, 5, -3, -5, 4]), 1), [2, 3, -2, -3, 2])


@settings(max_examples=200, deadline=None)
@given(m=st.floats(1e-7, 0.999), acc=st.integers(-10**6, 10**6))
def test_fixed_point_requantization(m, acc):
    mult, shift = quantize_multiplier(m)
    assert 2**30 <= mult < 2**31
    assert mult / 2**shift == pytest.approx(m, rel=1e-9)
    exact = rounding_rshift(np.array([acc], np.int64) * mult, shift)[0]
    assert abs(exact - acc * m) <= 0.5 + abs(acc) * m * 1e-9 + 1e-9


def test_fold_identity_bn_is_noop():
    m = instantiate(paper_architecture(4), seed=0)
    f = fold_batchnorm(m)
    assert not any(isinstance(l, BatchNorm) for l in f.layers)
    np.testing.assert_allclose(f.layers[0].params["W"], m.layers[0].params["W"] / np.sqrt(1 + 1e-3), rtol=1e-6)
    assert [l.kind for l in f.layers] == [l.kind for l in m.layers if l.kind != "batchnorm"]


@pytest.mark.parametrize("seed", range(5))
def test_fold_equivalence(seed):
    rng = np.random.default_rng(seed)
    m = randomize_bn(instantiate(random_genome(rng, 3), seed=seed, dtype=np.float64), rng)
    X = rng.random((16, 784))
    f = fold_batchnorm(m)
    assert np.abs(f.logits(X) - m.logits(X)).max() < 1e-5
    # the source model is untouched
    assert any(isinstance(l, BatchNorm) for l in m.layers)


def test_fold_requires_preceding_conv():
    m = Model([Conv1D(1, 2, 3), ReLU(), BatchNorm(2), GlobalAvgPool(), Dense(2, 2), Softmax()], (1, 10))
    with pytest.raises(UnsupportedTopology):
        fold_batchnorm(m)


def test_quantize_rejects_unfolded():
    m = instantiate(paper_architecture(4))
    with pytest.raises(UnsupportedTopology):
        quantize_model(m, calibrate(m, np.zeros((1, 784), np.float32)))


def test_calibration_examples():
    m = fold_batchnorm(instantiate(paper_architecture(4)))
    assert calibrate(m, np.zeros((1, 784), np.float32)).edge(0) == (0.0, 0.0)
    with pytest.raises(EmptyCalibrationSet):
        calibrate(m, np.zeros((0, 784), np.float32))
    rng = np.random.default_rng(0)
    A, B = rng.random((20, 784)).astype(np.float32), rng.random((30, 784)).astype(np.float32)
    # aligned batches so the float32 GEMMs see identical chunks
    whole = calibrate(m, np.concatenate([A, B]), batch_size=10)
    assert whole == calibrate(m, A, batch_size=10).merge(calibrate(m, B, batch_size=10))
    lo, hi = whole.edge(0)
    assert 0 <= lo <= hi <= 1
    # adding records never shrinks a range
    small = calibrate(m, A)
    assert all(w_lo <= s_lo and w_hi >= s_hi for w_lo, w_hi, s_lo, s_hi in
               zip(whole.mins, whole.maxs, small.mins, small.maxs))


def _quantized(seed, n=64):
    rng = np.random.default_rng(seed)
    m = randomize_bn(instantiate(random_genome(rng, 4), seed=seed), rng)
    X = rng.random((n, 784)).astype(np.float32)
    f = fold_batchnorm(m)
    return m, f, quantize_model(f, calibrate(f, X)), X


def test_quantized_model_invariants():
    m, f, q, X = _quantized(0)
    weighted = [op for op in q.ops if hasattr(op, "weight")]
    float_layers = [l for l in f.layers if l.kind in ("conv1d", "dense")]
    assert len(weighted) == len(float_layers)
    for op, layer in zip(weighted, float_layers):
        assert op.weight.dtype == np.int8 and op.bias.dtype == np.int32
        assert np.abs(op.w_qp.dequantize(op.weight) - layer.params["W"]).max() <= op.w_qp.scale / 2 * (1 + 1e-6)
    assert not any(op.kind.endswith("dropout") for op in q.ops)
    assert q.n_weight_bytes() == sum(l.params["W"].size + 4 * l.params["b"].size for l in float_layers)


def test_quantized_forward_deterministic():
    _, _, q, X = _quantized(1)
    a, b = quantized_forward(q, X[:3]), quantized_forward(q, X[:3])
    assert a.tobytes() == b.tobytes()
    assert np.allclose(a.sum(axis=1), 1)


@pytest.mark.parametrize("seed", range(4))
def test_argmax_agreement_random_models(seed):
    m, _, q, X = _quantized(seed, n=100)
    agree = np.mean(m.predict(X) == q.predict(X))
    assert agree >= 0.95


def test_micro_model_zero_input_matches_bias_path():
    # one conv that is nearly identity, then the head; zero input leaves only the biases
    conv = Conv1D(1, 2, 1)
    conv.params = {"W": np.array([[[1.0]], [[0.5]]], np.float32), "b": np.array([0.2, -0.1], np.float32)}
    dense = Dense(2, 2)
    dense.params = {"W": np.array([[1.0, -1.0], [0.5, 2.0]], np.float32), "b": np.array([0.05, 0.1], np.float32)}
    m = Model([conv, ReLU(), GlobalAvgPool(), dense, Softmax()], (1, 8), init=False)
    X = np.concatenate([np.zeros((1, 8)), np.random.default_rng(0).random((15, 8))]).astype(np.float32)
    q = quantize_model(m, calibrate(m, X))
    zero = X[:1]
    step = q.output_qp.scale
    assert np.abs(q.logits(zero) - m.logits(zero)).max() <= step * 1.5
    assert np.abs(q.logits(X) - m.logits(X)).max() <= 3 * step


def test_compare_constant_dataset_zero_delta():
    m, _, q, X = _quantized(2)
    Xc = np.tile(X[:1], (10, 1))
    y = m.predict(Xc)
    r = compare(m, q, Xc, y)
    assert r.delta_acc == 0 and r.delta_f1 == 0 and r.agreement == 1
    assert r.to_csv().splitlines()[0] == "task,float_acc,float_f1,int8_acc,int8_f1,delta_acc,delta_f1"
    with pytest.raises(EmptyDataset):
        compare(m, q, X[:0], y[:0])


def test_quantize_params_dataclass():
    qp = QuantParams(0.5, 3)
    np.testing.assert_array_equal(qp.quantize([-10.0, 0.0, 0.26, 1000.0]), [0, 3, 4, 255])
    np.testing.assert_allclose(qp.dequantize([3, 5]), [0.0, 1.0])


def test_dropout_removed_and_topology_error():
    m = Model([Conv1D(1, 2, 3), ReLU(), Dropout(0.3), GlobalAvgPool(), Dense(2, 2), Softmax()], (1, 10))
    q = quantize_model(m, calibrate(m, np.ones((2, 10), np.float32)))
    assert [op.kind for op in q.ops] == ["qconv1d", "qgap", "qdense"]
