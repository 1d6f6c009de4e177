"""The joint capitalization/punctuation network and its baseline variants.

Word vectors come from a small post-LN transformer over subwords, summed
back to one vector per word.  The capitalization head gives per-word
probabilities ``p``; ``c = p @ W`` turns them into a soft capitalization
feature, which is concatenated onto the word vector before the punctuation
head and its CRF.

Variants switch parts of that wiring off or around (see :class:`Variant`).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from . import crf
from .autodiff import Record, ShapeError, Tensor
from .corpus import CapLabel, PuncLabel, Segment
from .tokenizer import PAD, SubwordVocab

N_CAP = len(CapLabel)
N_PUNC = len(PuncLabel)


class Variant(str, Enum):
    JOINT = "JOINT"
    SINGLE_CAP = "SINGLE_CAP"
    SINGLE_PUNC = "SINGLE_PUNC"
    PUNC_FIRST = "PUNC_FIRST"
    NO_CAP_FEATURE = "NO_CAP_FEATURE"
    SOFTMAX_DECODER = "SOFTMAX_DECODER"
    STATIC_EMBEDDING = "STATIC_EMBEDDING"

    @property
    def has_cap(self) -> bool:
        return self is not Variant.SINGLE_PUNC

    @property
    def has_punc(self) -> bool:
        return self is not Variant.SINGLE_CAP

    @property
    def soft_cap(self) -> bool:
        return self in (Variant.JOINT, Variant.SOFTMAX_DECODER, Variant.STATIC_EMBEDDING)

    @property
    def uses_crf(self) -> bool:
        return self in (Variant.JOINT, Variant.SINGLE_PUNC, Variant.NO_CAP_FEATURE, Variant.STATIC_EMBEDDING)

    @property
    def contextual(self) -> bool:
        return self is not Variant.STATIC_EMBEDDING


@dataclass
class ModelConfig:
    vocab_size: int = 4096
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    d_cap: int = 256
    n_cap: int = N_CAP
    n_punc: int = N_PUNC
    max_positions: int = 512
    variant: Variant = Variant.JOINT
    init_std: float = 0.02
    dropout: float = 0.0
    position_init: str = "sinusoidal"
    punc_reduction: str = "word"

    def __post_init__(self):
        self.variant = Variant(self.variant)
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "d_cap", "max_positions"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"ModelConfig.{name} must be >= 1")
        if self.variant.contextual and self.d_model % self.n_heads:
            raise ValueError(f"ModelConfig: d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.n_cap != N_CAP or self.n_punc != N_PUNC:
            raise ValueError("ModelConfig: label counts are fixed at 3 casing and 4 punctuation labels")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("ModelConfig.dropout must be in [0, 1)")
        if self.position_init not in ("sinusoidal", "normal"):
            raise ValueError(f"ModelConfig.position_init must be 'sinusoidal' or 'normal', got {self.position_init!r}")
        if self.punc_reduction not in ("word", "segment"):
            raise ValueError(f"ModelConfig.punc_reduction must be 'word' or 'segment', got {self.punc_reduction!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        return d


@dataclass
class Batch:
    """Padded tensors for a list of segments."""

    sub_ids: np.ndarray  # (B, S) subword ids, PAD beyond each sequence
    sub_mask: np.ndarray  # (B, S) bool
    pool: np.ndarray  # (B, W, S) 1 where subword s belongs to word w
    word_mask: np.ndarray  # (B, W) bool
    lengths: np.ndarray  # (B,) word counts
    cap: np.ndarray  # (B, W)
    punc: np.ndarray  # (B, W)

    @property
    def size(self) -> int:
        return self.sub_ids.shape[0]


def make_batch(
    word_lists: Sequence[Sequence[str]],
    vocab: SubwordVocab,
    max_positions: int,
    dtype=np.float32,
    cap: Optional[Sequence[Sequence[int]]] = None,
    punc: Optional[Sequence[Sequence[int]]] = None,
) -> Batch:
    pieces = []
    for words in word_lists:
        if not words:
            raise ShapeError("make_batch: empty word sequence")
        enc = [vocab.encode_word(w) for w in words]
        total = sum(len(e) for e in enc)
        if total > max_positions:
            raise ShapeError(
                f"encode: {len(words)} words expand to {total} subwords, above max positions {max_positions}"
            )
        pieces.append(enc)
    b = len(pieces)
    s_max = max(sum(len(e) for e in enc) for enc in pieces)
    w_max = max(len(enc) for enc in pieces)
    ids = np.full((b, s_max), PAD, dtype=np.int64)
    pool = np.zeros((b, w_max, s_max), dtype=dtype)
    for i, enc in enumerate(pieces):
        pos = 0
        for w, sub in enumerate(enc):
            ids[i, pos : pos + len(sub)] = sub
            pool[i, w, pos : pos + len(sub)] = 1.0
            pos += len(sub)
    lengths = np.array([len(enc) for enc in pieces], dtype=np.int64)
    word_mask = np.arange(w_max)[None, :] < lengths[:, None]
    sub_mask = pool.sum(axis=1) > 0

    def labels(rows):
        out = np.zeros((b, w_max), dtype=np.int64)
        if rows is not None:
            for i, r in enumerate(rows):
                out[i, : len(r)] = [int(x) for x in r]
        return out

    return Batch(ids, sub_mask, pool, word_mask, lengths, labels(cap), labels(punc))


def batch_from_segments(segments: Sequence[Segment], vocab: SubwordVocab, max_positions: int, dtype=np.float32) -> Batch:
    return make_batch(
        [s.words for s in segments],
        vocab,
        max_positions,
        dtype,
        cap=[[t.cap for t in s.tokens] for s in segments],
        punc=[[t.punc for t in s.tokens] for s in segments],
    )


@dataclass
class Output:
    cap_logits: Optional[Tensor]
    cap_probs: Optional[Tensor]
    punc_scores: Optional[Tensor]
    cap_loss: Optional[Tensor]
    punc_loss: Optional[Tensor]


def _param_specs(cfg: ModelConfig) -> List[Tuple[str, Tuple[int, ...], str]]:
    """(name, shape, init) in initialisation order; init is normal/zeros/ones/sinusoidal."""
    d, v = cfg.d_model, cfg.variant
    specs = [("tok_emb", (cfg.vocab_size, d), "normal")]
    if v.contextual:
        specs += [("pos_emb", (cfg.max_positions, d), cfg.position_init), ("emb_ln.g", (d,), "ones"), ("emb_ln.b", (d,), "zeros")]
        for i in range(cfg.n_layers):
            p = f"layers.{i}."
            specs += [
                (p + "attn.wq", (d, d), "normal"),
                (p + "attn.bq", (d,), "zeros"),
                # no key bias: a shared offset on every key cancels in the softmax
                (p + "attn.wk", (d, d), "normal"),
                (p + "attn.wv", (d, d), "normal"),
                (p + "attn.bv", (d,), "zeros"),
                (p + "attn.wo", (d, d), "normal"),
                (p + "attn.bo", (d,), "zeros"),
                (p + "ln1.g", (d,), "ones"),
                (p + "ln1.b", (d,), "zeros"),
                (p + "ff.w1", (d, cfg.d_ff), "normal"),
                (p + "ff.b1", (cfg.d_ff,), "zeros"),
                (p + "ff.w2", (cfg.d_ff, d), "normal"),
                (p + "ff.b2", (d,), "zeros"),
                (p + "ln2.g", (d,), "ones"),
                (p + "ln2.b", (d,), "zeros"),
            ]
    if v.has_cap:
        cap_in = d + cfg.n_punc if v is Variant.PUNC_FIRST else d
        specs += [("cap.w", (cap_in, cfg.n_cap), "normal"), ("cap.b", (cfg.n_cap,), "zeros")]
    if v.soft_cap:
        specs += [("softcap.W", (cfg.n_cap, cfg.d_cap), "normal")]
    if v.has_punc:
        punc_in = d + cfg.d_cap if v.soft_cap else d
        specs += [("punc.w", (punc_in, cfg.n_punc), "normal"), ("punc.b", (cfg.n_punc,), "zeros")]
    if v.uses_crf:
        specs += [
            ("crf.trans", (cfg.n_punc, cfg.n_punc), "zeros"),
            ("crf.start", (cfg.n_punc,), "zeros"),
            ("crf.stop", (cfg.n_punc,), "zeros"),
        ]
    return specs


def no_decay(name: str) -> bool:
    """Parameters exempt from weight decay: biases and CRF transitions."""
    leaf = name.rsplit(".", 1)[-1]
    return name.startswith("crf.") or leaf.startswith("b")


class JointModel:
    """All learned parameters plus the forward computation for one variant.

    ``softcap.W`` is stored as a ``(3, d_cap)`` table whose row ``k`` is the
    feature vector of casing class ``k``, so ``c = p @ W``.
    """

    def __init__(self, config: ModelConfig, params: Dict[str, Tensor]):
        self.config = config
        self.params = params
        expected = {n: s for n, s, _ in _param_specs(config)}
        if set(expected) != set(params):
            missing = sorted(set(expected) - set(params))
            extra = sorted(set(params) - set(expected))
            raise ValueError(f"JointModel: parameter mismatch, missing {missing}, unexpected {extra}")
        for n, shape in expected.items():
            if params[n].shape != shape:
                raise ShapeError(f"JointModel: {n} has shape {params[n].shape}, expected {shape}")

    @property
    def variant(self) -> Variant:
        return self.config.variant

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.params.items()}

    def load_snapshot(self, snap: Dict[str, np.ndarray]) -> None:
        for n, arr in snap.items():
            self.params[n].data = arr.copy()

    def register(self, rec: Record) -> None:
        for n, t in self.params.items():
            rec.register(n, t)

    # -- encoder ------------------------------------------------------------

    def _attention(self, h: Tensor, key_bias: Tensor, i: int) -> Tensor:
        cfg, P = self.config, self.params
        b, s, d = h.shape
        nh, dh = cfg.n_heads, d // cfg.n_heads
        p = f"layers.{i}.attn."

        def heads(x: Tensor) -> Tensor:
            return ad.transpose(ad.reshape(x, (b, s, nh, dh)), (0, 2, 1, 3))

        q = heads(ad.add(ad.matmul(h, P[p + "wq"]), P[p + "bq"]))
        k = heads(ad.matmul(h, P[p + "wk"]))
        v = heads(ad.add(ad.matmul(h, P[p + "wv"]), P[p + "bv"]))
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
        att = ad.softmax(ad.add(scores, key_bias), axis=-1)
        ctx = ad.reshape(ad.transpose(ad.matmul(att, v), (0, 2, 1, 3)), (b, s, d))
        return ad.add(ad.matmul(ctx, P[p + "wo"]), P[p + "bo"])

    def _block(self, h: Tensor, key_bias: Tensor, i: int, rng, training: bool) -> Tensor:
        P, rate = self.params, self.config.dropout
        p = f"layers.{i}."
        a = ad.dropout(self._attention(h, key_bias, i), rate, rng, training)
        h = ad.layer_norm(ad.add(h, a), P[p + "ln1.g"], P[p + "ln1.b"])
        f = ad.gelu(ad.add(ad.matmul(h, P[p + "ff.w1"]), P[p + "ff.b1"]))
        f = ad.dropout(ad.add(ad.matmul(f, P[p + "ff.w2"]), P[p + "ff.b2"]), rate, rng, training)
        return ad.layer_norm(ad.add(h, f), P[p + "ln2.g"], P[p + "ln2.b"])

    def encode(self, batch: Batch, rng=None, training: bool = False) -> Tensor:
        """Word representations ``(B, W, d_model)``: subword outputs summed per word."""
        P = self.params
        h = ad.gather(P["tok_emb"], batch.sub_ids)
        if self.variant.contextual:
            s = batch.sub_ids.shape[1]
            if s > self.config.max_positions:
                raise ShapeError(f"encode: {s} subwords exceed max positions {self.config.max_positions}")
            h = ad.add(h, ad.gather(P["pos_emb"], np.arange(s)))
            h = ad.layer_norm(h, P["emb_ln.g"], P["emb_ln.b"])
            h = ad.dropout(h, self.config.dropout, rng, training)
            neg = np.where(batch.sub_mask, 0.0, -1e9).astype(self.dtype)
            key_bias = Tensor(neg[:, None, None, :])
            for i in range(self.config.n_layers):
                h = self._block(h, key_bias, i, rng, training)
        return ad.matmul(Tensor(batch.pool.astype(self.dtype, copy=False)), h)

    def encode_words(self, words: Sequence[str], vocab: SubwordVocab) -> np.ndarray:
        """``(n, d_model)`` representations for a single word sequence."""
        batch = make_batch([list(words)], vocab, self.config.max_positions, self.dtype)
        return self.encode(batch).data[0]

    # -- heads --------------------------------------------------------------

    def predict_cap(self, e: Tensor) -> Tuple[Tensor, Tensor]:
        """Casing logits and their softmax ``p``."""
        logits = ad.add(ad.matmul(e, self.params["cap.w"]), self.params["cap.b"])
        return logits, ad.softmax(logits, axis=-1)

    def soft_cap(self, p: Tensor) -> Tensor:
        """``c = p @ W``: each row mixes W's class vectors by the casing probabilities."""
        return ad.matmul(p, self.params["softcap.W"])

    def punc_scores(self, e: Tensor, c: Optional[Tensor] = None) -> Tensor:
        x = e if c is None else ad.concat([e, c], axis=-1)
        return ad.add(ad.matmul(x, self.params["punc.w"]), self.params["punc.b"])

    def crf_params(self) -> Tuple[Tensor, Tensor, Tensor]:
        return self.params["crf.trans"], self.params["crf.start"], self.params["crf.stop"]

    def forward(self, batch: Batch, rng=None, training: bool = False, with_loss: bool = True) -> Output:
        """Scores, probabilities and losses for one batch.

        Casing loss is the mean word cross-entropy.  Punctuation loss is the
        CRF negative log-likelihood (or, for softmax decoders, the summed
        cross-entropy) of the whole batch divided by its word count, or by
        its segment count when ``punc_reduction == "segment"``.
        """
        v = self.variant
        e = self.encode(batch, rng, training)
        mask = batch.word_mask
        cap_logits = cap_probs = s = cap_loss = punc_loss = None

        if v is Variant.PUNC_FIRST:
            s = self.punc_scores(e)
            q = ad.softmax(s, axis=-1)
            cap_logits, cap_probs = self.predict_cap(ad.concat([e, q], axis=-1))
        else:
            if v.has_cap:
                cap_logits, cap_probs = self.predict_cap(e)
            if v.has_punc:
                c = self.soft_cap(cap_probs) if v.soft_cap else None
                s = self.punc_scores(e, c)

        if with_loss:
            if cap_logits is not None:
                cap_loss = ad.cross_entropy(cap_logits, batch.cap, mask, reduction="mean")
            if s is not None:
                if v.uses_crf:
                    nll = crf.crf_nll(s, batch.punc, *self.crf_params(), lengths=batch.lengths)
                    total = ad.sum_all(nll)
                else:
                    total = ad.cross_entropy(s, batch.punc, mask, reduction="sum")
                per = batch.lengths.sum() if self.config.punc_reduction == "word" else batch.size
                punc_loss = ad.scale(total, 1.0 / float(per))
        return Output(cap_logits, cap_probs, s, cap_loss, punc_loss)

    def decode(self, batch: Batch) -> Tuple[Optional[List[List[int]]], Optional[List[List[int]]]]:
        """Predicted casing (argmax) and punctuation (Viterbi or argmax) per sequence."""
        out = self.forward(batch, with_loss=False)
        caps = puncs = None
        lengths = batch.lengths
        if out.cap_probs is not None:
            am = out.cap_probs.data.argmax(axis=-1)
            caps = [am[i, : int(n)].tolist() for i, n in enumerate(lengths)]
        if out.punc_scores is not None:
            s = out.punc_scores.data.astype(np.float64)
            if self.variant.uses_crf:
                T, st, sp = (t.data.astype(np.float64) for t in self.crf_params())
                puncs = crf.viterbi_batch(s, lengths, T, st, sp)
            else:
                am = s.argmax(axis=-1)
                puncs = [am[i, : int(n)].tolist() for i, n in enumerate(lengths)]
        return caps, puncs


def sinusoid_table(n_positions: int, dim: int) -> np.ndarray:
    """Sine/cosine position table, used only as the starting point of the learned one.

    Random position vectors are nearly orthogonal, so "look at the next word"
    has to be learned separately for every position; this table makes that
    relation the same linear map everywhere.
    """
    pos = np.arange(n_positions)[:, None]
    freq = 10000.0 ** (-np.arange(0, dim, 2) / dim)
    table = np.zeros((n_positions, dim))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq[: dim // 2])
    return table


def init_params(config: ModelConfig, rng: np.random.Generator, dtype=np.float32) -> Dict[str, Tensor]:
    params = {}
    for name, shape, kind in _param_specs(config):
        if kind == "normal":
            arr = rng.normal(0.0, config.init_std, size=shape)
        elif kind == "sinusoidal":
            # same RMS as the normal-initialised token embeddings
            arr = sinusoid_table(*shape) * (config.init_std * math.sqrt(2.0))
        elif kind == "ones":
            arr = np.ones(shape)
        else:
            arr = np.zeros(shape)
        params[name] = Tensor(arr.astype(dtype), requires_grad=True, name=name)
    return params


def build_variant(config: ModelConfig, rng: np.random.Generator, dtype=np.float32) -> JointModel:
    """Freshly initialised model wired for ``config.variant``."""
    return JointModel(config, init_params(config, rng, dtype))


def crf_viterbi(s: np.ndarray, model: JointModel) -> Tuple[List[int], float]:
    T, st, sp = (t.data.astype(np.float64) for t in model.crf_params())
    return crf.viterbi(np.asarray(s, dtype=np.float64), T, st, sp)
