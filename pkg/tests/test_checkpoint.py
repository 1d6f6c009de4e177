import struct

import numpy as np
import pytest

from capunc import checkpoint as ck
from capunc import model as M
from capunc.tokenizer import train_vocab


@pytest.fixture
def saved(tmp_path):
    vocab = train_vocab(["chào", "bạn", "khỏe", "không"] * 2, 30)
    cfg = M.ModelConfig(vocab_size=len(vocab), d_model=8, n_heads=2, n_layers=1, d_ff=16, d_cap=4, max_positions=16)
    model = M.build_variant(cfg, np.random.default_rng(0))
    path = tmp_path / "m.cnpc"
    digest = ck.save(path, model, vocab)
    return path, model, vocab, digest


def test_save_load_save_is_bitwise(saved, tmp_path):
    path, model, vocab, digest = saved
    m2, v2 = ck.load(path)
    assert v2 == vocab and m2.config == model.config
    for k, t in model.params.items():
        assert np.array_equal(m2.params[k].data, t.data)
    again = tmp_path / "again.cnpc"
    assert ck.save(again, m2, v2) == digest
    assert again.read_bytes() == path.read_bytes()
    assert ck.checksum(path) == digest


def test_header(saved):
    raw = saved[0].read_bytes()
    assert raw[:4] == b"CNPC" and struct.unpack("<I", raw[4:8]) == (1,)


def test_loads_into_high_precision(saved):
    m, _ = ck.load(saved[0], dtype=np.float64)
    assert m.params["tok_emb"].data.dtype == np.float64


def test_rejects_other_version(saved):
    path = saved[0]
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 2)
    path.write_bytes(bytes(raw))
    with pytest.raises(ck.CheckpointError, match="version 2"):
        ck.load(path)


def test_rejects_corruption(saved):
    path = saved[0]
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ck.CheckpointError, match="checksum"):
        ck.load(path)


def test_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"PK\x03\x04" + b"\0" * 64)
    with pytest.raises(ck.CheckpointError, match="magic"):
        ck.load(path)


def test_rejects_tokenizer_mismatch(saved, monkeypatch):
    path, model, vocab, _ = saved
    other = train_vocab(["xyz"] * 3, 10)
    monkeypatch.setattr(type(vocab), "checksum", lambda self: "0" * 64)
    ck.save(path, model, vocab)
    monkeypatch.undo()
    with pytest.raises(ck.CheckpointError, match="tokenizer checksum"):
        ck.load(path)
    assert other.checksum() != vocab.checksum()
