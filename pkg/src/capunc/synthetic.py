"""Rule-generated cased, punctuated documents for desk-scale experiments.

The rules are deterministic given the word classes, so a model that learns
them can label held-out text perfectly:

* the first word of a sentence is capitalised;
* names are always capitalised, acronyms are always all-caps;
* a clause-joining word puts a comma on the word before it;
* a sentence ending in an interrogative word takes a question mark,
  every other sentence a period.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .corpus import Segment, normalize_and_label, segment, split_corpus
from .evaluation import EvalReport

PRONOUNS = ("i", "we", "they", "she", "he", "you", "my mother", "the doctor", "the nurse", "my son")
NAMES = ("Uyen", "Minh", "Lan", "Hoa", "Nam", "Linh", "Tuan", "Mai", "Binh", "Thao")
ACRONYMS = ("ICU", "BMI", "ECG", "MRI", "HIV", "CDC")
VERBS = ("has", "needs", "visits", "calls", "takes", "sees", "checks", "wants", "books", "tests")
OBJECTS = (
    "a fever", "the medicine", "a cough", "the clinic", "some water", "a headache", "the results",
    "a vaccine", "the hospital", "an appointment", "some rest", "the test",
)
JOINERS = ("but", "so", "because", "although")
INTERROGATIVES = ("why", "when", "where", "how")


def _pick(rng: np.random.Generator, options: Sequence[str]) -> str:
    return options[int(rng.integers(len(options)))]


def _clause(rng: np.random.Generator) -> List[str]:
    r = rng.random()
    subject = _pick(rng, NAMES) if r < 0.3 else _pick(rng, PRONOUNS)
    verb = _pick(rng, VERBS)
    r = rng.random()
    if r < 0.2:
        obj = _pick(rng, NAMES)
    elif r < 0.35:
        obj = _pick(rng, ACRONYMS)
    else:
        obj = _pick(rng, OBJECTS)
    return [*subject.split(), verb, *obj.split()]


def make_sentence(rng: np.random.Generator) -> str:
    words = _clause(rng)
    while rng.random() < 0.35:
        words[-1] += ","
        words += [_pick(rng, JOINERS), *_clause(rng)]
    if rng.random() < 0.3:
        words.append(_pick(rng, INTERROGATIVES) + "?")
    else:
        words[-1] += "."
    first = words[0]
    if first.islower():
        words[0] = first[0].upper() + first[1:]
    return " ".join(words)


def generate_documents(n_sentences: int, seed: int = 0, per_doc=(2, 8)) -> List[str]:
    """Documents (as raw text) totalling exactly ``n_sentences`` sentences."""
    rng = np.random.default_rng(seed)
    docs, left = [], n_sentences
    while left > 0:
        k = min(left, int(rng.integers(per_doc[0], per_doc[1] + 1)))
        docs.append(" ".join(make_sentence(rng) for _ in range(k)))
        left -= k
    return docs


def documents_to_segments(docs: Sequence[str], max_len: int = 150) -> List[Segment]:
    out: List[Segment] = []
    for d in docs:
        out.extend(segment(normalize_and_label(d), max_len))
    return out


# the training defaults target a pretrained encoder; a randomly initialised
# desk-scale model needs a larger step and more of them to learn in 10 epochs
BENCHMARK_TRAIN = dict(lr=2e-3, batch_size=4, epochs=10, mixture=0.15)


@dataclass
class BenchmarkRun:
    variant: str
    report: EvalReport
    best_epoch: int
    seconds: float
    history: List[dict]


def run_benchmark(
    variants: Sequence[str] = ("JOINT",),
    n_sentences: int = 5000,
    seed: int = 0,
    max_len: int = 150,
    on_epoch: Optional[Callable[[str, dict], None]] = None,
    **train_overrides,
) -> List[BenchmarkRun]:
    """Train each variant on the same rule corpus and score it on the test split.

    Every variant sees identical splits, vocabulary and seed.
    ``train_overrides`` replace entries of :data:`BENCHMARK_TRAIN`.
    """
    from .model import ModelConfig, build_variant
    from .tokenizer import train_vocab
    from .training import TrainConfig, evaluate_model, make_rng, train

    docs = generate_documents(n_sentences, seed=seed + 1)
    tr, va, te = split_corpus(docs, (0.5, 0.2, 0.3), seed=seed)
    train_segs, valid_segs, test_segs = (documents_to_segments(d, max_len) for d in (tr, va, te))
    vocab = train_vocab([t.text for s in train_segs for t in s.tokens], 4096)
    settings = {**BENCHMARK_TRAIN, **train_overrides, "seed": seed}
    runs = []
    for name in variants:
        t0 = time.perf_counter()
        rng = make_rng(seed)
        model = build_variant(ModelConfig(vocab_size=len(vocab), variant=name), rng)
        hook = (lambda e, name=name: on_epoch(name, e)) if on_epoch else None
        res = train(model, vocab, train_segs, valid_segs, TrainConfig(**settings), rng, hook)
        report = evaluate_model(res.model, vocab, test_segs)
        runs.append(BenchmarkRun(name, report, res.best_epoch, time.perf_counter() - t0, res.history))
    return runs
