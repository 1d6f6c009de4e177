"""Byte-pair subword vocabulary trained over words (no cross-word merges)."""

from __future__ import annotations

import hashlib
import heapq
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Tuple

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
DEFAULT_VOCAB_SIZE = 4096


@dataclass
class SubwordVocab:
    """Character alphabet plus an ordered list of merge rules.

    Ids: 0 is padding, 1 is unknown, then the alphabet in sorted order, then
    one id per merge in the order the merges were learned.
    """

    alphabet: List[str]
    merges: List[Tuple[str, str]]
    _ids: Dict[str, int] = field(init=False, repr=False, compare=False)
    _ranks: Dict[Tuple[str, str], int] = field(init=False, repr=False, compare=False)
    _cache: Dict[str, Tuple[int, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.merges = [tuple(m) for m in self.merges]
        self.symbols = [PAD_TOKEN, UNK_TOKEN]
        self._ids = {}
        for sym in [*self.alphabet, *(a + b for a, b in self.merges)]:
            if sym not in self._ids:
                self._ids[sym] = len(self.symbols)
                self.symbols.append(sym)
        self._ranks = {m: r for r, m in enumerate(self.merges)}
        self._cache = {}

    def __len__(self) -> int:
        return len(self.symbols)

    def token_id(self, symbol: str) -> int:
        return self._ids[symbol]

    def subwords(self, word: str) -> List[str]:
        return [self.symbols[i] for i in self.encode_word(word)]

    def encode_word(self, word: str) -> List[int]:
        if not word:
            raise ValueError("encode_word: empty word")
        hit = self._cache.get(word)
        if hit is None:
            hit = tuple(self._encode(word))
            self._cache[word] = hit
        return list(hit)

    def _encode(self, word: str) -> List[int]:
        ids = self._ids
        # None marks a character outside the alphabet; it never merges
        parts: List = [c if c in ids else None for c in word]
        while len(parts) > 1:
            best, best_rank = -1, None
            for i in range(len(parts) - 1):
                if parts[i] is None or parts[i + 1] is None:
                    continue
                r = self._ranks.get((parts[i], parts[i + 1]))
                if r is not None and (best_rank is None or r < best_rank):
                    best, best_rank = i, r
            if best < 0:
                break
            parts[best : best + 2] = [parts[best] + parts[best + 1]]
        return [UNK if p is None else ids[p] for p in parts]

    def decode(self, ids: Iterable[int]) -> str:
        out = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.symbols):
                raise ValueError(f"decode: unknown id {i}")
            if i == PAD:
                continue
            out.append("�" if i == UNK else self.symbols[i])
        return "".join(out)

    def to_json(self) -> str:
        return json.dumps(
            {"alphabet": self.alphabet, "merges": [list(m) for m in self.merges]},
            ensure_ascii=False,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "SubwordVocab":
        obj = json.loads(text)
        return cls(obj["alphabet"], [tuple(m) for m in obj["merges"]])

    def checksum(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def train_vocab(corpus: Iterable[str], target_size: int = DEFAULT_VOCAB_SIZE) -> SubwordVocab:
    """Learn merges until ``target_size`` symbols or no pair occurs twice.

    The most frequent adjacent pair is merged each round; ties go to the
    lexicographically smallest ``(left, right)`` pair.
    """
    freqs = Counter(w for w in corpus if w)
    if not freqs:
        raise ValueError("train_vocab: empty corpus")
    alphabet = sorted({c for w in freqs for c in w})
    if target_size < len(alphabet) + 2:
        raise ValueError(
            f"train_vocab: target_size {target_size} < {len(alphabet)} base characters + 2 reserved"
        )

    words = [list(w) for w in freqs]
    counts = [freqs[w] for w in freqs]
    pairs: Dict[Tuple[str, str], int] = defaultdict(int)
    where: Dict[Tuple[str, str], set] = defaultdict(set)
    for wi, syms in enumerate(words):
        for p in zip(syms, syms[1:]):
            pairs[p] += counts[wi]
            where[p].add(wi)
    heap = [(-c, p) for p, c in pairs.items()]
    heapq.heapify(heap)

    merges: List[Tuple[str, str]] = []
    size = len(alphabet) + 2
    known = set(alphabet)
    while size < target_size and heap:
        negc, pair = heapq.heappop(heap)
        if pairs.get(pair, 0) != -negc:
            continue  # stale entry
        if -negc < 2:
            break
        merges.append(pair)
        merged = pair[0] + pair[1]
        if merged not in known:
            known.add(merged)
            size += 1
        touched = set()
        for wi in sorted(where.pop(pair, ())):
            syms = words[wi]
            c = counts[wi]
            for p in zip(syms, syms[1:]):
                pairs[p] -= c
                touched.add(p)
            out, i = [], 0
            while i < len(syms):
                if i + 1 < len(syms) and (syms[i], syms[i + 1]) == pair:
                    out.append(merged)
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            words[wi] = out
            for p in zip(out, out[1:]):
                pairs[p] += c
                where[p].add(wi)
                touched.add(p)
        for p in touched:
            if pairs[p] > 0:
                heapq.heappush(heap, (-pairs[p], p))
            else:
                pairs.pop(p, None)
                where.pop(p, None)
    return SubwordVocab(alphabet, merges)
