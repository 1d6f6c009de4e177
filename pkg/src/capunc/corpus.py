"""Labelled corpus construction: casing/punctuation labels, segments, splits, files.

Each word of a cased, punctuated text becomes a :class:`LabeledToken`
holding the lowercased word, how it was cased, and which mark (if any)
followed it::

    chào    1   O
    uyên    1   COMMA
    bạn     0   O
    không   0   QMARK

:func:`restore` is the inverse mapping.
"""

from __future__ import annotations

import os
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

DEFAULT_MAX_LEN = 150


class CapLabel(IntEnum):
    NONE = 0
    CAP = 1
    ALLCAP = 2


class PuncLabel(IntEnum):
    O = 0
    COMMA = 1
    PERIOD = 2
    QMARK = 3


MARKS = {",": PuncLabel.COMMA, ".": PuncLabel.PERIOD, "?": PuncLabel.QMARK}
MARK_CHARS = {v: k for k, v in MARKS.items()}
SENTENCE_END = (PuncLabel.PERIOD, PuncLabel.QMARK)


class DatasetFormatError(ValueError):
    """A dataset file line could not be parsed."""


@dataclass(frozen=True)
class LabeledToken:
    text: str
    cap: CapLabel = CapLabel.NONE
    punc: PuncLabel = PuncLabel.O

    def __post_init__(self):
        object.__setattr__(self, "cap", CapLabel(self.cap))
        object.__setattr__(self, "punc", PuncLabel(self.punc))


@dataclass
class Segment:
    """A bounded run of tokens ending at a sentence boundary.

    ``forced`` marks a piece cut out of a sentence longer than the segment
    limit; it is bookkeeping only and is not written to dataset files.
    """

    tokens: List[LabeledToken]
    forced: bool = field(default=False, compare=False)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> List[str]:
        return [t.text for t in self.tokens]


# ---------------------------------------------------------------------------
# labelling


def _keeps(ch: str) -> bool:
    """Characters that stay inside words: letters, marks, digits, symbols."""
    cat = unicodedata.category(ch)
    return cat[0] in "LMNS"


def casing_label(word: str) -> CapLabel:
    """Casing class of an original (cased) word.

    ALLCAP needs at least two letters, all uppercase; otherwise the first
    letter decides between CAP and NONE.
    """
    letters = [c for c in word if c.isalpha()]
    if not letters:
        return CapLabel.NONE
    if len(letters) >= 2 and all(c.isupper() for c in letters):
        return CapLabel.ALLCAP
    return CapLabel.CAP if letters[0].isupper() else CapLabel.NONE


def normalize_and_label(text: str) -> List[LabeledToken]:
    """Lowercase ``text``, strip punctuation, and label each word.

    Commas, periods and question marks label the word before them (only the
    first mark of a run counts); a kept mark inside a whitespace token also
    ends the current word.  Any other punctuation or control character is
    deleted without splitting the word.
    """
    words: List[str] = []
    puncs: List[PuncLabel] = []
    open_for_mark = False

    def flush(buf: List[str]) -> None:
        nonlocal open_for_mark
        if buf:
            words.append("".join(buf))
            puncs.append(PuncLabel.O)
            open_for_mark = True
            buf.clear()

    for raw in text.split():
        buf: List[str] = []
        for ch in raw:
            if ch in MARKS:
                flush(buf)
                if open_for_mark:
                    puncs[-1] = MARKS[ch]
                    open_for_mark = False
            elif _keeps(ch):
                buf.append(ch)
        flush(buf)

    return [LabeledToken(w.lower(), casing_label(w), p) for w, p in zip(words, puncs)]


def apply_casing(word: str, cap: CapLabel) -> str:
    if cap == CapLabel.ALLCAP:
        return word.upper()
    if cap == CapLabel.CAP:
        for i, c in enumerate(word):
            if c.isalpha():
                return word[:i] + c.upper() + word[i + 1 :]
    return word


def restore(tokens: Iterable[Union[LabeledToken, Tuple[str, int, int]]]) -> str:
    """Cased, punctuated text from ``(word, cap, punc)`` triples."""
    out = []
    for tok in tokens:
        word, cap, punc = (tok.text, tok.cap, tok.punc) if isinstance(tok, LabeledToken) else tok
        piece = apply_casing(word, CapLabel(cap))
        punc = PuncLabel(punc)
        if punc != PuncLabel.O:
            piece += MARK_CHARS[punc]
        out.append(piece)
    return " ".join(out)


def canonical_cap(word: str, cap: CapLabel) -> CapLabel:
    """The casing label ``word`` actually carries once restored with ``cap``.

    Differs from ``cap`` only where the word cannot show it, e.g. ALLCAP on a
    one-letter word or CAP on a word without letters.
    """
    return casing_label(apply_casing(word, CapLabel(cap)))


# ---------------------------------------------------------------------------
# segmentation and splitting


def sentences(tokens: Sequence[LabeledToken]) -> List[List[LabeledToken]]:
    out, cur = [], []
    for t in tokens:
        cur.append(t)
        if t.punc in SENTENCE_END:
            out.append(cur)
            cur = []
    if cur:
        out.append(cur)
    return out


def segment(tokens: Sequence[LabeledToken], max_len: int = DEFAULT_MAX_LEN) -> List[Segment]:
    """Greedily pack whole sentences into segments of at most ``max_len`` tokens."""
    if max_len < 1:
        raise ValueError("segment: max_len must be >= 1")
    out: List[Segment] = []
    cur: List[LabeledToken] = []
    for sent in sentences(tokens):
        if len(sent) > max_len:
            if cur:
                out.append(Segment(cur))
                cur = []
            for i in range(0, len(sent), max_len):
                out.append(Segment(list(sent[i : i + max_len]), forced=True))
            continue
        if len(cur) + len(sent) > max_len:
            out.append(Segment(cur))
            cur = []
        cur.extend(sent)
    if cur:
        out.append(Segment(cur))
    return out


def split_sizes(n: int, ratios: Sequence[float]) -> List[int]:
    """Largest-remainder apportionment of ``n`` items."""
    raw = [n * r for r in ratios]
    sizes = [int(np.floor(x + 1e-9)) for x in raw]
    rest = n - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[:rest]:
        sizes[i] += 1
    return sizes


def split_corpus(
    documents: Sequence,
    ratios: Sequence[float] = (0.5, 0.2, 0.3),
    seed: int = 0,
) -> Tuple[list, list, list]:
    """Shuffle documents with ``seed`` and cut into train/validation/test."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split_corpus: ratios must be three non-negative numbers summing to 1, got {ratios}")
    used = sum(1 for r in ratios if r > 0)
    if len(documents) < used:
        raise ValueError(f"split_corpus: {len(documents)} documents cannot fill {used} splits")
    order = np.random.default_rng(seed).permutation(len(documents))
    sizes = split_sizes(len(documents), ratios)
    parts, start = [], 0
    for size in sizes:
        parts.append([documents[i] for i in order[start : start + size]])
        start += size
    return parts[0], parts[1], parts[2]


# ---------------------------------------------------------------------------
# dataset files


def write_dataset(path: Union[str, os.PathLike], segments: Iterable[Segment]) -> None:
    blocks = []
    for seg in segments:
        blocks.append("".join(f"{t.text}\t{int(t.cap)}\t{t.punc.name}\n" for t in seg.tokens))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(blocks))


def read_dataset(path: Union[str, os.PathLike]) -> List[Segment]:
    segments: List[Segment] = []
    cur: List[LabeledToken] = []
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                if cur:
                    segments.append(Segment(cur))
                    cur = []
                continue
            fields = line.split("\t")
            if len(fields) != 3 or not fields[0]:
                raise DatasetFormatError(f"{path}:{lineno}: expected '<text>\\t<cap>\\t<punc>'")
            text, cap, punc = fields
            if cap not in ("0", "1", "2"):
                raise DatasetFormatError(f"{path}:{lineno}: unknown capitalization code {cap!r}")
            if punc not in PuncLabel.__members__:
                raise DatasetFormatError(f"{path}:{lineno}: unknown punctuation label {punc!r}")
            cur.append(LabeledToken(text, CapLabel(int(cap)), PuncLabel[punc]))
    if cur:
        segments.append(Segment(cur))
    return segments


STAT_ROWS = ("COMMA", "PERIOD", "QMARK", "CAP", "ALL-CAP", "Sentences")


def label_counts(segments: Iterable[Segment]) -> Dict[str, int]:
    """Per-label tallies in the layout of the dataset statistics table."""
    c: Counter = Counter()
    for seg in segments:
        for t in seg.tokens:
            c[t.punc.name] += 1
            c[t.cap.name] += 1
        # a forced chunk continues into the next segment, so only a
        # segment that ends unmarked and unforced closes a sentence
        c["Sentences"] += sum(t.punc in SENTENCE_END for t in seg.tokens)
        if seg.tokens and seg.tokens[-1].punc not in SENTENCE_END and not seg.forced:
            c["Sentences"] += 1
    return {
        "COMMA": c["COMMA"],
        "PERIOD": c["PERIOD"],
        "QMARK": c["QMARK"],
        "CAP": c["CAP"],
        "ALL-CAP": c["ALLCAP"],
        "Sentences": c["Sentences"],
    }


def format_stats(stats: Dict[str, Dict[str, int]]) -> str:
    names = list(stats)
    width = max(len(r) for r in STAT_ROWS) + 2
    lines = ["".ljust(width) + "".join(n.rjust(12) for n in names)]
    for row in STAT_ROWS:
        lines.append(row.ljust(width) + "".join(f"{stats[n][row]:>12,}" for n in names))
    return "\n".join(lines)
