import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import accuracy_score, confusion_matrix as sk_confusion, f1_score

from tinytc.errors import CollapsedWidth, EmptyDataset, ShapeMismatch, StaleCache
from tinytc.nn import (
    AdamState,
    AvgPool1D,
    BatchNorm,
    Conv1D,
    Dense,
    Dropout,
    EarlyStopping,
    GlobalAvgPool,
    MaxPool1D,
    Model,
    ReduceLROnPlateau,
    ReLU,
    Softmax,
    TrainConfig,
    adam_step,
    classification_metrics,
    cross_entropy,
    train,
)
from tinytc.nn.gradcheck import check_gradients, random_micro_model, relative_error
from tinytc.nn.layers import conv_output_length, same_padding


def naive_conv(x, W, b, stride, padding):
    """Direct loop convolution (cross-correlation), TF-style 'same' padding."""
    B, C, L = x.shape
    O, _, k = W.shape
    if padding == "same":
        out = -(-L // stride)
        total = max((out - 1) * stride + k - L, 0)
        x = np.pad(x, ((0, 0), (0, 0), (total // 2, total - total // 2)))
    else:
        out = (L - k) // stride + 1
    y = np.zeros((B, O, out))
    for n in range(B):
        for o in range(O):
            for t in range(out):
                y[n, o, t] = np.sum(x[n, :, t * stride:t * stride + k] * W[o]) + b[o]
    return y


@settings(max_examples=40, deadline=None)
@given(C=st.integers(1, 3), O=st.integers(1, 4), L=st.integers(7, 30), k=st.integers(1, 7),
       s=st.integers(1, 4), pad=st.sampled_from(["same", "valid"]), seed=st.integers(0, 9999))
def test_conv_matches_loop_oracle(C, O, L, k, s, pad, seed):
    if pad == "valid" and k > L:
        return
    rng = np.random.default_rng(seed)
    layer = Conv1D(C, O, k, s, pad)
    layer.init_params(rng, np.float64)
    layer.params["b"] = rng.normal(size=O)
    x = rng.normal(size=(2, C, L))
    y = layer.forward(x, False)
    assert y.shape[1:] == layer.output_shape((C, L))
    np.testing.assert_allclose(y, naive_conv(x, layer.params["W"], layer.params["b"], s, pad), atol=1e-12)


def test_same_padding_is_left_light():
    assert same_padding(10, 4, 1) == (1, 2)
    assert same_padding(10, 3, 2) == (0, 1)
    assert conv_output_length(784, 7, 5, "valid") == 156
    assert conv_output_length(784, 7, 5, "same") == 157


def test_batchnorm_train_and_infer():
    rng = np.random.default_rng(0)
    bn = BatchNorm(3)
    bn.init_params(rng, np.float64)
    x = rng.normal(2.0, 3.0, size=(8, 3, 10))
    y = bn.forward(x, True)
    np.testing.assert_allclose(y.mean(axis=(0, 2)), 0, atol=1e-10)
    np.testing.assert_allclose(y.var(axis=(0, 2)), x.var(axis=(0, 2)) / (x.var(axis=(0, 2)) + 1e-3), rtol=1e-9)
    # after one step the bias-corrected running estimate equals the batch statistics
    np.testing.assert_allclose(bn.buffers["mean"], x.mean(axis=(0, 2)))
    np.testing.assert_allclose(bn.buffers["var"], x.var(axis=(0, 2)))
    np.testing.assert_allclose(bn.forward(x, False), y, atol=1e-12)


def test_batchnorm_running_stats_are_ema():
    rng = np.random.default_rng(1)
    bn = BatchNorm(2, momentum=0.9)
    bn.init_params(rng, np.float64)
    means = []
    for _ in range(5):
        x = rng.normal(rng.normal(), 1.0, size=(4, 2, 6))
        means.append(x.mean(axis=(0, 2)))
        bn.forward(x, True)
    w = 0.1 * 0.9 ** np.arange(4, -1, -1)
    expected = (w[:, None] * np.array(means)).sum(0) / w.sum()
    np.testing.assert_allclose(bn.buffers["mean"], expected)


def test_pooling():
    x = np.arange(14, dtype=float).reshape(1, 2, 7)
    np.testing.assert_array_equal(MaxPool1D(2).forward(x, False), [[[1, 3, 5], [8, 10, 12]]])
    np.testing.assert_array_equal(AvgPool1D(3).forward(x, False), [[[1, 4], [8, 11]]])
    with pytest.raises(CollapsedWidth):
        MaxPool1D(3).output_shape((2, 2))
    np.testing.assert_array_equal(GlobalAvgPool().forward(x, False), [[3, 10]])


def test_dropout_is_inverted_and_identity_at_inference():
    rng = np.random.default_rng(0)
    d = Dropout(0.5)
    x = np.ones((200, 1, 100))
    y = d.forward(x, True, rng)
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert abs(y.mean() - 1.0) < 0.02
    assert d.forward(x, False) is x
    with pytest.raises(ValueError):
        Dropout(1.0)


def test_softmax_stable():
    p = Softmax().forward(np.array([[1000.0, 1000.0, -1000.0]]), False)
    np.testing.assert_allclose(p, [[0.5, 0.5, 0.0]])


def tiny_model(seed=0, dtype=np.float64, length=20):
    layers = [Conv1D(1, 3, 3, 1, "same"), BatchNorm(3), ReLU(), MaxPool1D(2), Dropout(0.1),
              GlobalAvgPool(), Dense(3, 2), Softmax()]
    return Model(layers, (1, length), rng_seed=seed, dtype=dtype)


def test_model_topology_checked():
    with pytest.raises(ShapeMismatch):
        Model([Conv1D(1, 2, 3), ReLU(), Dense(2, 2), Softmax()], (1, 10))
    with pytest.raises(ShapeMismatch):
        Model([Conv1D(2, 2, 3), GlobalAvgPool(), Dense(2, 2), Softmax()], (1, 10))


def test_backward_requires_train_forward():
    m = tiny_model()
    x = np.zeros((2, 1, 20))
    with pytest.raises(StaleCache):
        m.backward(np.array([0, 1]))
    m.forward(x, "infer")
    with pytest.raises(StaleCache):
        m.backward(np.array([0, 1]))
    m.forward(x, "train")
    m.backward(np.array([0, 1]))
    with pytest.raises(StaleCache):
        m.backward(np.array([0, 1]))


def test_init_is_seeded():
    a, b, c = tiny_model(1), tiny_model(1), tiny_model(2)
    assert all(np.array_equal(a.named_params()[k], b.named_params()[k]) for k in a.named_params())
    assert not np.array_equal(a.named_params()["0.W"], c.named_params()["0.W"])


def test_state_round_trip():
    m = tiny_model()
    state = m.get_state()
    other = tiny_model(5)
    other.set_state(state)
    x = np.random.default_rng(0).normal(size=(3, 1, 20))
    np.testing.assert_array_equal(m.forward(x), other.forward(x))
    assert "buffer:1.mean" in state


def test_relative_error_floor():
    assert relative_error(np.array([0.0]), np.array([0.0]))[0] == 0.0
    assert relative_error(np.array([1.0]), np.array([1.0 + 1e-6]))[0] == pytest.approx(5e-7, rel=1e-3)


@pytest.mark.parametrize("seed", range(5))
def test_gradients_on_micro_models(seed):
    model, X, y = random_micro_model(np.random.default_rng(seed))
    assert check_gradients(model, X, y).max_rel_error < 1e-3


def test_gradients_cross_entropy_head():
    m = tiny_model()
    X = np.random.default_rng(3).normal(size=(4, 1, 20))
    m.layers[0].params["b"] = np.array([0.3, -0.2, 0.1])
    assert check_gradients(m, X, np.array([0, 1, 1, 0])).max_rel_error < 1e-3


def test_adam_matches_formula():
    p = {"w": np.array([1.0, -2.0])}
    g = {"w": np.array([0.5, 0.1])}
    s = AdamState()
    adam_step(p, g, s, 0.1)
    # the first step moves each coordinate by lr * sign(g)
    np.testing.assert_allclose(p["w"], [0.9, -2.1], rtol=1e-6)
    after_one = p["w"].copy()
    adam_step(p, g, s, 0.1)
    m = 0.9 * 0.1 * g["w"] + 0.1 * g["w"]
    v = 0.999 * 0.001 * g["w"] ** 2 + 0.001 * g["w"] ** 2
    step = 0.1 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
    np.testing.assert_allclose(p["w"], after_one - step, rtol=1e-12)


def test_plateau_schedule():
    sched = ReduceLROnPlateau(1e-3, 0.5, 2, min_lr=2e-4)
    lrs = [sched.update(v) for v in [1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99, 1.0, 1.0]]
    assert lrs == [1e-3, 1e-3, 1e-3, 5e-4, 5e-4, 2.5e-4, 2.5e-4, 2e-4, 2e-4]


def test_early_stopping():
    stop = EarlyStopping(3)
    flags = [stop.update(e, v) for e, v in enumerate([1.0, 0.5, 0.6, 0.7, 0.8, 0.1], 1)]
    assert flags == [False, False, False, False, True, False]
    assert stop.best_epoch == 6


def _separable(n=120, length=32, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.random((n, length)).astype(np.float32) * 0.3
    X[y == 1] += 0.5
    return X, y


def test_train_learns_and_restores_best():
    X, y = _separable()
    m = tiny_model(dtype=np.float32, length=32)
    cfg = TrainConfig(lr0=1e-2, batch=32, max_epochs=30, early_stop_patience=5)
    m, hist = train(m, X[:80], y[:80], X[80:], y[80:], cfg)
    assert hist.best.val_loss == min(e.val_loss for e in hist.epochs)
    probs = m.predict_proba(X[80:])
    assert cross_entropy(probs, y[80:]) == pytest.approx(hist.best.val_loss, rel=1e-5)
    assert hist.best.val_acc >= 0.9
    assert hist.to_csv().splitlines()[0] == "epoch,train_loss,val_loss,val_acc,lr"


def test_train_deterministic():
    X, y = _separable()
    cfg = TrainConfig(batch=16, max_epochs=3)
    a = train(tiny_model(dtype=np.float32, length=32), X[:80], y[:80], X[80:], y[80:], cfg)[1]
    b = train(tiny_model(dtype=np.float32, length=32), X[:80], y[:80], X[80:], y[80:], cfg)[1]
    assert a.to_csv() == b.to_csv()


def test_train_rejects_empty():
    X, y = _separable()
    with pytest.raises(EmptyDataset):
        train(tiny_model(length=32), X[:0], y[:0], X, y, TrainConfig())


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=60))
def test_metrics_match_sklearn(pairs):
    yt, yp = map(np.array, zip(*pairs))
    m = classification_metrics(yt, yp)
    labels = np.union1d(yt, yp)
    assert m.accuracy == pytest.approx(accuracy_score(yt, yp))
    assert m.macro_f1 == pytest.approx(f1_score(yt, yp, labels=labels, average="macro", zero_division=0))
    k = m.confusion.shape[0]
    np.testing.assert_array_equal(m.confusion, sk_confusion(yt, yp, labels=range(k)))


def test_metrics_empty():
    with pytest.raises(EmptyDataset):
        classification_metrics([], [])
