"""Joint optimisation with AdamW and best-epoch selection on validation F1.

Randomness comes from one ``numpy.random.Generator`` per run.  With
:func:`make_rng` the draws happen in this order: parameter initialisation
(in parameter-declaration order), then one permutation of the training
segments per epoch, then dropout masks inside each step when dropout > 0.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .autodiff import NumericError, Record, Tensor
from .corpus import Segment
from .evaluation import EvalReport, evaluate
from .model import JointModel, Variant, batch_from_segments, make_batch, no_decay
from .tokenizer import SubwordVocab

logger = logging.getLogger(__name__)

# grids the mixture weight and learning rate were tuned over
LR_GRID = (1e-5, 2e-5, 3e-5, 4e-5, 5e-5)
MIXTURE_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


@dataclass
class TrainConfig:
    lr: float = 5e-5
    mixture: float = 0.15
    batch_size: int = 32
    epochs: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2
    seed: int = 0
    clip_norm: Optional[float] = None

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("TrainConfig.lr must be > 0")
        if not 0.0 <= self.mixture <= 1.0:
            raise ValueError("TrainConfig.mixture must be in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("TrainConfig.batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("TrainConfig.epochs must be >= 0")


@dataclass
class TrainState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    best_score: float = -math.inf
    best_epoch: int = -1


def joint_loss(cap_loss, punc_loss, mixture: float):
    """``mixture * cap + (1 - mixture) * punc`` for floats or scalar tensors."""
    if not 0.0 <= mixture <= 1.0:
        raise ValueError("joint_loss: mixture weight must be in [0, 1]")
    if isinstance(cap_loss, Tensor):
        return ad.add(ad.scale(cap_loss, mixture), ad.scale(punc_loss, 1.0 - mixture))
    return mixture * cap_loss + (1.0 - mixture) * punc_loss


def total_loss(model: JointModel, out, mixture: float) -> Tensor:
    if model.variant is Variant.SINGLE_CAP:
        return out.cap_loss
    if model.variant is Variant.SINGLE_PUNC:
        return out.punc_loss
    return joint_loss(out.cap_loss, out.punc_loss, mixture)


def adamw_step(
    params: Dict[str, Tensor],
    grads: Dict[str, np.ndarray],
    state: TrainState,
    config: TrainConfig,
) -> None:
    """One in-place AdamW update with bias correction and decoupled decay."""
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ad.ShapeError(f"adamw_step: gradient for {name} has shape {g.shape}, param {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"adamw_step: non-finite gradient for {name}")
    if config.clip_norm is not None:
        norm = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
        if norm > config.clip_norm:
            factor = config.clip_norm / (norm + 1e-12)
            grads = {n: g * g.dtype.type(factor) for n, g in grads.items()}

    state.step += 1
    t = state.step
    b1, b2, lr = config.beta1, config.beta2, config.lr
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, g in grads.items():
        p = params[name].data
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        if config.weight_decay and not no_decay(name):
            p *= p.dtype.type(1.0 - lr * config.weight_decay)
        m *= m.dtype.type(b1)
        m += m.dtype.type(1.0 - b1) * g
        v *= v.dtype.type(b2)
        v += v.dtype.type(1.0 - b2) * (g * g)
        update = (m / p.dtype.type(c1)) / (np.sqrt(v / p.dtype.type(c2)) + p.dtype.type(config.eps))
        p -= p.dtype.type(lr) * update


def iterate_batches(segments: Sequence[Segment], batch_size: int, order: Optional[np.ndarray] = None):
    idx = np.arange(len(segments)) if order is None else order
    for start in range(0, len(idx), batch_size):
        yield [segments[i] for i in idx[start : start + batch_size]]


def predict(model: JointModel, vocab: SubwordVocab, word_lists: Sequence[Sequence[str]], batch_size: int = 32):
    """Casing and punctuation label lists for each word sequence."""
    caps, puncs = [], []
    for start in range(0, len(word_lists), batch_size):
        chunk = [list(w) for w in word_lists[start : start + batch_size]]
        batch = make_batch(chunk, vocab, model.config.max_positions, model.dtype)
        c, p = model.decode(batch)
        caps.extend(c if c is not None else [None] * len(chunk))
        puncs.extend(p if p is not None else [None] * len(chunk))
    return caps, puncs


def evaluate_model(model: JointModel, vocab: SubwordVocab, segments: Sequence[Segment], batch_size: int = 32) -> EvalReport:
    segments = [s for s in segments if len(s)]
    caps, puncs = predict(model, vocab, [s.words for s in segments], batch_size)
    gold_cap = [[int(t.cap) for t in s.tokens] for s in segments]
    gold_punc = [[int(t.punc) for t in s.tokens] for s in segments]
    return evaluate(
        gold_cap,
        caps if model.variant.has_cap else None,
        gold_punc,
        puncs if model.variant.has_punc else None,
    )


def train_step(model: JointModel, batch, state: TrainState, config: TrainConfig, rng=None):
    with Record() as rec:
        model.register(rec)
        out = model.forward(batch, rng=rng, training=True)
        loss = total_loss(model, out, config.mixture)
    grads = ad.backward(rec, loss)
    adamw_step(model.params, grads, state, config)
    cap = float(out.cap_loss.data) if out.cap_loss is not None else None
    punc = float(out.punc_loss.data) if out.punc_loss is not None else None
    return float(loss.data), cap, punc


@dataclass
class TrainResult:
    model: JointModel
    history: List[dict]
    best_epoch: int
    state: TrainState


def _task_log(task) -> Optional[dict]:
    if task is None:
        return None
    return {"precision": task.precision, "recall": task.recall, "f1": task.f1, "accuracy": task.accuracy}


def train(
    model: JointModel,
    vocab: SubwordVocab,
    train_segments: Sequence[Segment],
    valid_segments: Sequence[Segment],
    config: TrainConfig,
    rng: Optional[np.random.Generator] = None,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Train for ``config.epochs`` epochs and return the best-validation snapshot.

    Model selection uses the mean of the casing and punctuation micro-F1
    on ``valid_segments``; ties keep the earlier epoch.
    """
    if not train_segments or not valid_segments:
        raise ValueError("train: training and validation splits must be non-empty")
    rng = make_rng(config.seed) if rng is None else rng
    state = TrainState()
    history: List[dict] = []
    best = model.snapshot()
    dtype = model.dtype
    maxpos = model.config.max_positions
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_segments))
        sums = {"loss": 0.0, "cap": 0.0, "punc": 0.0}
        n_batches = 0
        for chunk in iterate_batches(train_segments, config.batch_size, order):
            batch = batch_from_segments(chunk, vocab, maxpos, dtype)
            loss, cap, punc = train_step(model, batch, state, config, rng)
            sums["loss"] += loss
            sums["cap"] += cap or 0.0
            sums["punc"] += punc or 0.0
            n_batches += 1
        try:
            report = evaluate_model(model, vocab, valid_segments, config.batch_size)
        except Exception as exc:
            raise RuntimeError(f"validation failed after epoch {epoch}: {exc}") from exc
        entry = {
            "epoch": epoch,
            "train_loss": sums["loss"] / n_batches,
            "train_cap_loss": sums["cap"] / n_batches if model.variant.has_cap else None,
            "train_punc_loss": sums["punc"] / n_batches if model.variant.has_punc else None,
            "valid_cap": _task_log(report.cap),
            "valid_punc": _task_log(report.punc),
            "average_f1": report.average_f1,
        }
        history.append(entry)
        logger.info("epoch %s %s", epoch, json.dumps(entry))
        if on_epoch is not None:
            on_epoch(entry)
        if report.average_f1 > state.best_score:
            state.best_score = report.average_f1
            state.best_epoch = epoch
            best = model.snapshot()
    model.load_snapshot(best)
    return TrainResult(model, history, state.best_epoch, state)


def select_epoch(averages: Sequence[float]) -> int:
    """1-based index of the highest average, earliest on ties."""
    best, best_i = -math.inf, 0
    for i, a in enumerate(averages, 1):
        if a > best:
            best, best_i = a, i
    return best_i


def token_accuracy(model: JointModel, vocab: SubwordVocab, segments: Sequence[Segment]) -> Dict[str, float]:
    report = evaluate_model(model, vocab, segments)
    out = {}
    if report.cap is not None:
        out["cap"] = report.cap.accuracy
    if report.punc is not None:
        out["punc"] = report.punc.accuracy
    return out
