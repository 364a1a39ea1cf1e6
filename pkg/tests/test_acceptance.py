"""End-to-end acceptance checks, one test per criterion, each with its runtime limit."""

import time

import numpy as np
import pytest

import golden
from oracles import measure
from tinytc.arch import HardwareBudget, check_constraints, count_flops, count_params, max_tensor, paper_architecture, random_genome
from tinytc.estimators import CNNClassifier, QuantizedClassifier
from tinytc.ingest import IngestDiagnostics, ingest_capture
from tinytc.io import decode_model, encode_model
from tinytc.nn.gradcheck import check_gradients, random_micro_model
from tinytc.nn.training import TrainConfig
from tinytc.quant import activation_qparams, calibrate, compare, fold_batchnorm, quantize_model, weight_qparams
from tinytc.search import EvolutionarySearch, SearchConfig, holdout_split

acceptance = pytest.mark.acceptance


class Clock:
    def __init__(self, limit_s):
        self.limit_s = limit_s

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.limit_s, f"took {self.elapsed:.1f}s, limit {self.limit_s}s"


def smoke_config(seed=0):
    return SearchConfig(generations=5, children=4, runs=1, budget=HardwareBudget(),
                        train=TrainConfig(max_epochs=50), seed=seed)


@pytest.fixture(scope="module")
def smoke_a(corpus):
    X, y = corpus
    t0 = time.perf_counter()
    best, log = EvolutionarySearch(smoke_config(), X, y).run()
    return best, log, time.perf_counter() - t0


# footprint ------------------------------------------------------------------

@acceptance(criterion=1, title="reference architecture params within 0.5% of 88,260")
def test_criterion_01_params():
    with Clock(1.0):
        p = count_params(paper_architecture())
    assert abs(p - 88_260) / 88_260 <= 0.005


@acceptance(criterion=2, title="reference architecture max tensor 20,124 elements (80.5KB)")
def test_criterion_02_max_tensor():
    with Clock(1.0):
        t = max_tensor(paper_architecture())
    assert t == 20_124
    assert abs(t - 20_120) / 20_120 <= 0.001
    assert abs(4 * t - 80_500) / 80_500 <= 0.01


@acceptance(criterion=3, title="reference architecture FLOPs within 20% of 10.08M")
def test_criterion_03_flops():
    with Clock(1.0):
        f = count_flops(paper_architecture())
    assert abs(f - 10_080_000) / 10_080_000 <= 0.20


@acceptance(criterion=4, title="cost model equals measurement on 1,000 random genomes")
def test_criterion_04_cost_oracles():
    rng = np.random.default_rng(2024)
    with Clock(120.0):
        for _ in range(1000):
            g = random_genome(rng, int(rng.integers(2, 12)))
            assert measure(g) == (count_params(g), max_tensor(g), count_flops(g)), g.to_text()


@acceptance(criterion=5, title="finite-difference gradients on 20 micro-models, rel err < 1e-3")
def test_criterion_05_gradients():
    rng = np.random.default_rng(5)
    kinds = set()
    worst = 0.0
    with Clock(120.0):
        for _ in range(20):
            model, X, y = random_micro_model(rng)
            kinds |= {l.kind for l in model.layers}
            worst = max(worst, check_gradients(model, X, y, step=1e-4).max_rel_error)
    assert worst < 1e-3
    assert kinds >= {"conv1d", "batchnorm", "relu", "maxpool1d", "avgpool1d", "dropout", "gap", "dense", "softmax"}


# search ---------------------------------------------------------------------

@acceptance(criterion=6, title="smoke search feasible, monotone, reaches 0.90")
def test_criterion_06_search(smoke_a):
    best, log, elapsed = smoke_a
    assert elapsed < 600
    budget = smoke_config().budget
    assert all(not check_constraints(c.genome, budget) for c in log.candidates)
    traj = log.best_trajectory
    assert len(traj) == 6 and all(a <= b for a, b in zip(traj, traj[1:]))
    assert traj[-1] >= 0.90


@acceptance(criterion=7, title="same-seed searches identical; resume reproduces trajectory")
def test_criterion_07_determinism(smoke_a, corpus, tmp_path):
    X, y = corpus
    best_a, log_a, elapsed_a = smoke_a
    with Clock(1200.0 - elapsed_a):
        ckpt = tmp_path / "search.mtck"
        EvolutionarySearch(smoke_config(), X, y).run(ckpt, stop_after=2)
        resumed = EvolutionarySearch.resume(ckpt, X, y, smoke_config())
        assert resumed.generation == 2
        best_b, log_b = resumed.run(ckpt)
    assert log_b.to_ndjson() == log_a.to_ndjson()
    assert log_b.generations_csv() == log_a.generations_csv()
    assert best_b.to_text() == best_a.to_text()
    assert log_b.best_trajectory == log_a.best_trajectory


# quantization ---------------------------------------------------------------

@acceptance(criterion=8, title="INT8 drop <= 3 points, argmax agreement >= 95%")
def test_criterion_08_quant_quality(corpus):
    X, y = corpus
    with Clock(300.0):
        tr, te = holdout_split(y, 0.3, seed=1)
        clf = CNNClassifier(paper_architecture(), max_epochs=200, random_state=0).fit(X[tr], y[tr])
        q = QuantizedClassifier(clf, n_calibration=512).fit(X[tr], y[tr])
        report = compare(clf.model_, q.qmodel_, X[te], y[te])
    print(report.to_text())
    assert report.float_metrics.accuracy - report.int8_metrics.accuracy <= 0.03
    assert report.agreement >= 0.95


@acceptance(criterion=9, title="quantize round trip <= scale/2 on 1e6 values; BN fold within 1e-5")
def test_criterion_09_quant_round_trip():
    rng = np.random.default_rng(9)
    with Clock(60.0):
        x = rng.normal(0, 3, 1_000_000)
        w = weight_qparams(x)
        assert np.all(np.abs(w.dequantize(w.quantize(x)) - x) <= w.scale / 2 * (1 + 1e-9))
        a = activation_qparams(float(x.min()), float(x.max()))
        assert np.all(np.abs(a.dequantize(a.quantize(x)) - x) <= a.scale / 2 * (1 + 1e-9))

        from test_quant import randomize_bn
        from tinytc.arch import instantiate
        for seed in range(5):
            r = np.random.default_rng(seed)
            m = randomize_bn(instantiate(random_genome(r, 4), seed=seed, dtype=np.float64), r)
            Xs = r.random((32, 784))
            assert np.abs(fold_batchnorm(m).logits(Xs) - m.logits(Xs)).max() < 1e-5


# ingest ---------------------------------------------------------------------

@acceptance(criterion=10, title="golden pcap fixtures give exact records and filter counts")
def test_criterion_10_ingest_golden():
    with Clock(10.0):
        for make in golden.ALL:
            g = make()
            diag = IngestDiagnostics()
            recs = ingest_capture(g.capture(), 0, diag)
            assert len(recs) == len(g.expected), g.name
            for rec, exp in zip(recs, g.expected):
                assert rec.data.shape == (784,)
                assert np.array_equal(rec.data, exp), g.name
            assert dict(diag.filtered) == g.filtered, g.name
            assert dict(diag.sessions_dropped) == g.dropped, g.name


# serialization --------------------------------------------------------------

@acceptance(criterion=11, title="model files round trip bit-identically; f32 size anchors 353KB")
def test_criterion_11_serialization(corpus):
    from tinytc.arch import instantiate
    X, _ = corpus
    with Clock(30.0):
        g = paper_architecture()
        m = instantiate(g, seed=0)
        buf = encode_model(m)
        back = decode_model(buf)
        assert back.predict_proba(X).tobytes() == m.predict_proba(X).tobytes()
        assert encode_model(back) == buf

        f = fold_batchnorm(m)
        q = quantize_model(f, calibrate(f, X))
        qbuf = encode_model(q)
        qback = decode_model(qbuf)
        assert qback.int_logits(X).tobytes() == q.int_logits(X).tobytes()
        assert encode_model(qback) == qbuf

    params = count_params(g)
    assert round(4 * params / 1000) == 353
    assert abs(len(buf) - 4 * params) / (4 * params) <= 0.05
    assert len(qbuf) < len(buf) / 3
