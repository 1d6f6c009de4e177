"""Mark-level precision, recall and F1 for casing and punctuation.

Only "mark" labels are scored: CAP/ALLCAP for casing, COMMA/PERIOD/QMARK
for punctuation.  A position where gold and prediction are both the
no-mark label contributes nothing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence

from .corpus import CapLabel, PuncLabel

CAP_MARKS = (CapLabel.CAP, CapLabel.ALLCAP)
PUNC_MARKS = (PuncLabel.COMMA, PuncLabel.PERIOD, PuncLabel.QMARK)


@dataclass
class LabelCounts:
    tp: Dict[str, int]
    fp: Dict[str, int]
    fn: Dict[str, int]
    tokens: int = 0
    correct: int = 0

    @classmethod
    def empty(cls, labels) -> "LabelCounts":
        names = [lab.name for lab in labels]
        return cls({n: 0 for n in names}, {n: 0 for n in names}, {n: 0 for n in names})

    def __add__(self, other: "LabelCounts") -> "LabelCounts":
        return LabelCounts(
            {k: v + other.tp[k] for k, v in self.tp.items()},
            {k: v + other.fp[k] for k, v in self.fp.items()},
            {k: v + other.fn[k] for k, v in self.fn.items()},
            self.tokens + other.tokens,
            self.correct + other.correct,
        )


def count(gold: Sequence[int], pred: Sequence[int], labels=PUNC_MARKS) -> LabelCounts:
    """TP/FP/FN per mark label for aligned gold and predicted sequences."""
    if len(gold) != len(pred):
        raise ValueError(f"count: {len(gold)} gold labels but {len(pred)} predictions")
    out = LabelCounts.empty(labels)
    codes = {int(lab): lab.name for lab in labels}
    for g, p in zip(gold, pred):
        g, p = int(g), int(p)
        out.tokens += 1
        out.correct += g == p
        if g == p:
            if g in codes:
                out.tp[codes[g]] += 1
            continue
        if p in codes:
            out.fp[codes[p]] += 1
        if g in codes:
            out.fn[codes[g]] += 1
    return out


def prf(tp: int, fp: int, fn: int):
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class TaskReport:
    per_label: Dict[str, Dict[str, float]]
    precision: float
    recall: float
    f1: float
    tokens: int
    accuracy: float
    counts: Dict[str, Dict[str, int]] = field(default_factory=dict)


def scores(counts: LabelCounts) -> TaskReport:
    per = {}
    for name in counts.tp:
        p, r, f = prf(counts.tp[name], counts.fp[name], counts.fn[name])
        per[name] = {"precision": p, "recall": r, "f1": f}
    p, r, f = prf(sum(counts.tp.values()), sum(counts.fp.values()), sum(counts.fn.values()))
    acc = counts.correct / counts.tokens if counts.tokens else 0.0
    raw = {n: {"tp": counts.tp[n], "fp": counts.fp[n], "fn": counts.fn[n]} for n in counts.tp}
    return TaskReport(per, p, r, f, counts.tokens, acc, raw)


@dataclass
class EvalReport:
    cap: Optional[TaskReport] = None
    punc: Optional[TaskReport] = None

    @property
    def average_f1(self) -> float:
        """Mean micro-F1 over the tasks present (the model-selection score)."""
        fs = [t.f1 for t in (self.cap, self.punc) if t is not None]
        return sum(fs) / len(fs) if fs else 0.0

    def to_dict(self) -> dict:
        out = {}
        for key, task in (("capitalization", self.cap), ("punctuation", self.punc)):
            if task is None:
                continue
            out[key] = {
                "precision": task.precision,
                "recall": task.recall,
                "f1": task.f1,
                "accuracy": task.accuracy,
                "tokens": task.tokens,
                "per_label": task.per_label,
                "counts": task.counts,
            }
        out["average_f1"] = self.average_f1
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate(
    gold_cap: Optional[Iterable[Sequence[int]]] = None,
    pred_cap: Optional[Iterable[Sequence[int]]] = None,
    gold_punc: Optional[Iterable[Sequence[int]]] = None,
    pred_punc: Optional[Iterable[Sequence[int]]] = None,
) -> EvalReport:
    """Report over sequences of aligned labels; either task may be omitted."""
    report = EvalReport()
    if pred_cap is not None:
        total = LabelCounts.empty(CAP_MARKS)
        for g, p in zip(gold_cap, pred_cap):
            total = total + count(g, p, CAP_MARKS)
        report.cap = scores(total)
    if pred_punc is not None:
        total = LabelCounts.empty(PUNC_MARKS)
        for g, p in zip(gold_punc, pred_punc):
            total = total + count(g, p, PUNC_MARKS)
        report.punc = scores(total)
    return report


def _pct(x: float) -> str:
    return f"{100 * x:6.2f}"


def format_report(report: EvalReport, title: str = "") -> str:
    """Text table: one row per label and a micro row, P/R/F1 in percent."""
    lines = [title] if title else []
    for name, task in (("Capitalization", report.cap), ("Punctuation", report.punc)):
        if task is None:
            continue
        lines.append(f"{name:<16}{'Precision':>10}{'Recall':>10}{'F1':>10}")
        for label, s in task.per_label.items():
            lines.append(f"  {label:<14}{_pct(s['precision']):>10}{_pct(s['recall']):>10}{_pct(s['f1']):>10}")
        lines.append(f"  {'micro':<14}{_pct(task.precision):>10}{_pct(task.recall):>10}{_pct(task.f1):>10}")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def format_comparison(rows: Dict[str, EvalReport]) -> str:
    """Variant-by-variant table in the layout of the results tables."""
    head = f"{'Model':<18}| {'Cap P':>7}{'Cap R':>7}{'Cap F1':>8} | {'Punc P':>7}{'Punc R':>7}{'Punc F1':>8}"
    lines = [head, "-" * len(head)]

    def cells(t: Optional[TaskReport]) -> str:
        if t is None:
            return f"{'-':>7}{'-':>7}{'-':>8}"
        return f"{_pct(t.precision):>7}{_pct(t.recall):>7}{_pct(t.f1):>8}"

    for name, rep in rows.items():
        lines.append(f"{name:<18}| {cells(rep.cap)} | {cells(rep.punc)}")
    return "\n".join(lines) + "\n"
