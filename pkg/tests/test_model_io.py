import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tinytc.arch import cost_report, instantiate, paper_architecture, parse_genome, random_genome
from tinytc.errors import ChecksumMismatch, IoFailure, ModelBadMagic, ModelFileError, VersionUnsupported
from tinytc.io import decode_model, emit_cost_report, encode_model, load_model, parse_cost_csv, read_genome, save_model, write_genome
from tinytc.io.reports import COST_FIELDS
from tinytc.quant import calibrate, fold_batchnorm, quantize_model


def _quant(genome, seed=0):
    f = fold_batchnorm(instantiate(genome, seed=seed))
    X = np.random.default_rng(seed).random((8, 784)).astype(np.float32)
    return quantize_model(f, calibrate(f, X)), X


def _same_model(a, b):
    assert [l.kind for l in a.layers] == [l.kind for l in b.layers]
    for la, lb in zip(a.layers, b.layers):
        assert la.config() == lb.config()
        for k in la.params:
            assert la.params[k].tobytes() == lb.params[k].tobytes()
        for k in la.buffers:
            assert la.buffers[k].tobytes() == lb.buffers[k].tobytes()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_float_round_trip(seed):
    m = instantiate(random_genome(np.random.default_rng(seed)), seed=seed)
    back = decode_model(encode_model(m))
    _same_model(m, back)
    X = np.random.default_rng(seed).random((3, 784)).astype(np.float32)
    assert back.predict_proba(X).tobytes() == m.predict_proba(X).tobytes()


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_int8_round_trip(seed):
    q, X = _quant(random_genome(np.random.default_rng(seed)), seed % 1000)
    back = decode_model(encode_model(q))
    assert back.input_qp == q.input_qp
    assert back.int_logits(X).tobytes() == q.int_logits(X).tobytes()
    assert encode_model(back) == encode_model(q)


def test_load_save_load_is_idempotent(tmp_path):
    m = instantiate(paper_architecture(4), seed=3)
    n = save_model(m, tmp_path / "a.mtcm")
    assert n == (tmp_path / "a.mtcm").stat().st_size
    first = load_model(tmp_path / "a.mtcm")
    save_model(first, tmp_path / "b.mtcm")
    assert (tmp_path / "a.mtcm").read_bytes() == (tmp_path / "b.mtcm").read_bytes()


def test_corruption_is_detected():
    buf = encode_model(instantiate(paper_architecture(4)))
    for i in (6, 40, len(buf) // 2, len(buf) - 2):
        bad = bytearray(buf)
        bad[i] ^= 0x01
        with pytest.raises(ChecksumMismatch):
            decode_model(bytes(bad))
    with pytest.raises(ChecksumMismatch):
        decode_model(buf[:-10])
    with pytest.raises(ModelBadMagic):
        decode_model(b"XTCM" + buf[4:])
    with pytest.raises(ModelBadMagic):
        decode_model(b"")
    newer = bytearray(buf)
    struct.pack_into("<H", newer, 4, 2)
    with pytest.raises(VersionUnsupported):
        decode_model(bytes(newer))
    assert issubclass(ChecksumMismatch, ModelFileError)


def test_file_sizes_track_parameter_count():
    g = paper_architecture()
    params = cost_report(g).params
    f32 = len(encode_model(instantiate(g)))
    assert 4 * params <= f32 <= 1.05 * 4 * params
    q, _ = _quant(g)
    i8 = len(encode_model(q))
    biases = sum(op.bias.size for op in q.ops if hasattr(op, "bias"))
    assert params <= i8 <= 1.05 * (params + 3 * biases)


def test_write_failure_is_io_failure(tmp_path):
    with pytest.raises(IoFailure):
        save_model(instantiate(paper_architecture(4)), tmp_path / "missing" / "m.mtcm")


def test_cost_csv_round_trip_and_sums():
    g = paper_architecture()
    text = emit_cost_report(g, "csv")
    lines = text.splitlines()
    assert lines[0] == ",".join(COST_FIELDS)
    totals = parse_cost_csv(text)
    r = cost_report(g)
    assert totals == {"params": r.params, "max_tensor": r.max_tensor, "flops": r.flops}
    rows = [dict(zip(COST_FIELDS, l.split(","))) for l in lines[1:-1]]
    assert rows[0]["row"] == "input"
    assert sum(int(x["params"]) for x in rows) == r.params
    assert sum(int(x["flops"]) for x in rows) == r.flops
    assert max(int(x["elements"]) for x in rows) == r.max_tensor
    txt = emit_cost_report(g)
    assert "88.18K" in txt and "10.09M" in txt
    with pytest.raises(ValueError):
        emit_cost_report(g, "yaml")


def test_genome_file_round_trip(tmp_path):
    g = paper_architecture(7)
    write_genome(tmp_path / "g.txt", g)
    assert read_genome(tmp_path / "g.txt") == g
    assert parse_genome((tmp_path / "g.txt").read_text()) == g
