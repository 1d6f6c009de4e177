"""
Finite differences against the tape
===================================

The joint model's punctuation scores see the casing head through the soft
feature ``c = p @ W``.  That coupling only trains if gradients of the
punctuation loss reach the casing head, so we check it numerically on a
tiny model in float64.
"""

import numpy as np

from capunc import autodiff as ad
from capunc import model as M
from capunc.corpus import normalize_and_label, segment
from capunc.tokenizer import train_vocab

segs = segment(normalize_and_label("Chào Uyên, bạn có khoe không?"), 5)
vocab = train_vocab([t.text for s in segs for t in s.tokens], 40)

cfg = M.ModelConfig(vocab_size=len(vocab), d_model=8, n_layers=1, n_heads=2, d_ff=16, d_cap=4, max_positions=32, init_std=0.5)
model = M.build_variant(cfg, np.random.default_rng(0), dtype=np.float64)
batch = M.batch_from_segments(segs[:1], vocab, 32, np.float64)
print("words:", segs[0].words)

# %%
# Punctuation loss only.  The casing head still gets a gradient, through W.

punc_only = lambda p: model.forward(batch).punc_loss
with ad.Record() as rec:
    model.register(rec)
    loss = punc_only(model.params)
grads = ad.backward(rec, loss)
print("|d punc_loss / d cap.w| =", np.abs(grads["cap.w"]).max())

err, per = ad.grad_check(punc_only, model.params, step=1e-5)
print("worst relative error over all parameters:", err)
for name in ("cap.w", "cap.b", "softcap.W", "crf.trans", "layers.0.attn.wq"):
    print(f"  {name:<18} {per[name]:.2e}")

# %%
# crf.trans has the largest relative error, but that is the metric, not the
# gradient.  One of its entries is ~2e-7, and central differences at step
# 1e-5 carry ~1e-10 of round-off, which is a sizeable fraction of 2e-7.
# The absolute error tells the real story.

g = grads["crf.trans"]
t = model.params["crf.trans"].data
numeric = np.zeros_like(t)
for idx in np.ndindex(t.shape):
    orig = t[idx]
    t[idx] = orig + 1e-5
    up = punc_only(None).item()
    t[idx] = orig - 1e-5
    down = punc_only(None).item()
    t[idx] = orig
    numeric[idx] = (up - down) / 2e-5
print("smallest |gradient| entry:", np.abs(g).min())
print("max absolute error:       ", np.abs(g - numeric).max())
