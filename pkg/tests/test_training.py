import math

import numpy as np
import pytest

from capunc import model as M
from capunc import training as T
from capunc.autodiff import NumericError, Tensor
from capunc.corpus import normalize_and_label, segment
from capunc.tokenizer import train_vocab

TEXT = (
    "Minh has a fever. Why does Lan call? The ICU is full, so we wait. "
    "Hoa sees the doctor. When do we go? I take the medicine, but it tastes bad."
)


def toy():
    segs = segment(normalize_and_label(TEXT), 12)
    vocab = train_vocab([t.text for s in segs for t in s.tokens], 60)
    return segs, vocab


def tiny_model(vocab, variant="JOINT", seed=0):
    cfg = M.ModelConfig(vocab_size=len(vocab), d_model=16, n_layers=1, n_heads=2, d_ff=32, d_cap=8, max_positions=64, variant=variant)
    return M.build_variant(cfg, T.make_rng(seed))


def test_joint_loss_values():
    assert T.joint_loss(2.0, 1.0, 0.15) == 1.15
    assert T.joint_loss(2.0, 1.0, 0.0) == 1.0
    assert T.joint_loss(2.0, 1.0, 1.0) == 2.0
    out = T.joint_loss(Tensor(np.array(2.0)), Tensor(np.array(1.0)), 0.15)
    assert out.item() == pytest.approx(1.15, abs=1e-15)
    with pytest.raises(ValueError):
        T.joint_loss(1.0, 1.0, 1.5)


def test_adamw_first_step():
    # at t=1 the bias-corrected step is g/|g| (up to eps), whatever lr
    params = {"w": Tensor(np.array([1.0, -2.0]), name="w"), "b": Tensor(np.array([1.0]), name="b")}
    grads = {"w": np.array([0.5, -3.0]), "b": np.array([0.25])}
    cfg = T.TrainConfig(lr=0.1, weight_decay=0.01)
    T.adamw_step(params, grads, T.TrainState(), cfg)
    np.testing.assert_allclose(params["w"].data, [1.0 * 0.999 - 0.1, -2.0 * 0.999 + 0.1], atol=1e-8)
    np.testing.assert_allclose(params["b"].data, [0.9], atol=1e-8)  # biases are not decayed


def test_adamw_second_step_reference():
    p = {"x": Tensor(np.array([0.0]), name="x")}
    state = T.TrainState()
    cfg = T.TrainConfig(lr=1.0, weight_decay=0.0, eps=0.0)
    T.adamw_step(p, {"x": np.array([1.0])}, state, cfg)
    T.adamw_step(p, {"x": np.array([-1.0])}, state, cfg)
    m = 0.9 * 0.1 - 0.1
    v = 0.999 * 0.001 + 0.001
    second = (m / (1 - 0.9**2)) / math.sqrt(v / (1 - 0.999**2))
    assert p["x"].data[0] == pytest.approx(-1.0 - second, abs=1e-12)


def test_adamw_rejects_non_finite_gradient():
    p = {"x": Tensor(np.array([0.0]), name="x")}
    with pytest.raises(NumericError, match="x"):
        T.adamw_step(p, {"x": np.array([np.nan])}, T.TrainState(), T.TrainConfig())


def test_no_decay_rule():
    assert M.no_decay("cap.b") and M.no_decay("layers.0.attn.bq") and M.no_decay("crf.trans")
    assert not M.no_decay("cap.w") and not M.no_decay("softcap.W") and not M.no_decay("tok_emb")


def test_config_validation():
    for bad in (dict(lr=0.0), dict(mixture=-0.1), dict(batch_size=0), dict(epochs=-1)):
        with pytest.raises(ValueError):
            T.TrainConfig(**bad)


def test_select_epoch():
    assert T.select_epoch([0.5, 0.7, 0.6]) == 2
    assert T.select_epoch([0.4, 0.6, 0.6]) == 2


def test_training_is_deterministic_and_selects_logged_best():
    segs, vocab = toy()
    cfg = T.TrainConfig(lr=3e-3, batch_size=2, epochs=4, seed=11)
    a = T.train(tiny_model(vocab, seed=11), vocab, segs, segs, cfg)
    b = T.train(tiny_model(vocab, seed=11), vocab, segs, segs, cfg)
    assert a.history == b.history
    sa, sb = a.model.snapshot(), b.model.snapshot()
    assert all(np.array_equal(sa[k], sb[k]) for k in sa)
    assert a.best_epoch == T.select_epoch([h["average_f1"] for h in a.history])
    assert {"train_cap_loss", "train_punc_loss", "valid_cap", "valid_punc"} <= set(a.history[0])


def test_restores_best_snapshot():
    segs, vocab = toy()
    cfg = T.TrainConfig(lr=3e-3, batch_size=2, epochs=3, seed=1)
    res = T.train(tiny_model(vocab, seed=1), vocab, segs, segs, cfg)
    report = T.evaluate_model(res.model, vocab, segs)
    assert report.average_f1 == pytest.approx(res.history[res.best_epoch - 1]["average_f1"])


@pytest.mark.parametrize("variant", ["JOINT", "SOFTMAX_DECODER", "PUNC_FIRST"])
def test_full_mixture_freezes_punctuation_side(variant):
    segs, vocab = toy()
    m = tiny_model(vocab, variant)
    frozen = [k for k in m.params if k.startswith(("punc.", "softcap.", "crf."))]
    before = {k: m.params[k].data.copy() for k in frozen}
    T.train(m, vocab, segs, segs, T.TrainConfig(lr=1e-2, batch_size=3, epochs=2, mixture=1.0, weight_decay=0.0))
    if variant == "PUNC_FIRST":
        # here the punctuation head sits under the casing head, so it does learn
        assert any(not np.array_equal(m.params[k].data, before[k]) for k in frozen)
    else:
        assert all(np.array_equal(m.params[k].data, before[k]) for k in frozen)


def test_training_lowers_the_loss():
    segs, vocab = toy()
    res = T.train(tiny_model(vocab), vocab, segs, segs, T.TrainConfig(lr=1e-2, batch_size=4, epochs=40))
    assert res.history[-1]["train_loss"] < 0.5 * res.history[0]["train_loss"]


def test_train_needs_both_splits():
    segs, vocab = toy()
    with pytest.raises(ValueError):
        T.train(tiny_model(vocab), vocab, segs, [], T.TrainConfig())
