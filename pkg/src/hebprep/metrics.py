"""Evaluation measures: multiset morpheme F1, token-level NER F1, QA
exact-match/F1 and accuracy.

Micro-averaged metrics expose their raw counts so partial results can be
merged before scoring.
"""
from __future__ import annotations

import re
import unicodedata
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from .validation import check_same_length


@dataclass(frozen=True)
class PRFCounts:
    overlap: int = 0
    predicted: int = 0
    gold: int = 0

    def __add__(self, other: "PRFCounts") -> "PRFCounts":
        return PRFCounts(self.overlap + other.overlap, self.predicted + other.predicted, self.gold + other.gold)

    def scores(self) -> tuple[float, float, float]:
        p = self.overlap / self.predicted if self.predicted else 0.0
        r = self.overlap / self.gold if self.gold else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return p, r, f


# ---------------------------------------------------------------- morphology

def mset_counts(gold: Sequence[Iterable[tuple[str, str]]], pred: Sequence[Iterable[tuple[str, str]]]) -> list[PRFCounts]:
    """Per-sentence multiset overlap of (form, label) pairs."""
    check_same_length(gold, pred, "gold and predicted sentences")
    out = []
    for g, p in zip(gold, pred):
        gc = Counter(map(tuple, g))
        pc = Counter(map(tuple, p))
        out.append(PRFCounts(sum((gc & pc).values()), sum(pc.values()), sum(gc.values())))
    return out


def mset_f1(gold, pred, average: str = "micro") -> tuple[float, float, float]:
    """Precision, recall and F1 of labeled morphemes compared as multisets.

    ``average='micro'`` pools counts over sentences; ``'macro'`` averages
    per-sentence scores.  Sentences empty on both sides are skipped.
    """
    counts = [c for c in mset_counts(gold, pred) if c.predicted or c.gold]
    if average == "micro":
        return sum(counts, PRFCounts()).scores()
    if average == "macro":
        if not counts:
            return 0.0, 0.0, 0.0
        per = [c.scores() for c in counts]
        return tuple(sum(x[i] for x in per) / len(per) for i in range(3))
    raise ValueError(f"unknown average {average!r}")


# ---------------------------------------------------------------- NER

def token_counts(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]], outside: str = "O") -> PRFCounts:
    """TP/(TP+FP)/(TP+FN) as overlap/predicted/gold over non-O labels."""
    check_same_length(gold, pred, "gold and predicted sentences")
    tp = fp = fn = 0
    for g_seq, p_seq in zip(gold, pred):
        check_same_length(g_seq, p_seq, "gold and predicted labels")
        for g, p in zip(g_seq, p_seq):
            if g == p:
                tp += g != outside
            else:
                fp += p != outside
                fn += g != outside
    return PRFCounts(tp, tp + fp, tp + fn)


def token_prf(gold, pred, outside: str = "O") -> tuple[float, float, float]:
    return token_counts(gold, pred, outside).scores()


def token_f1(gold, pred, outside: str = "O") -> float:
    return token_prf(gold, pred, outside)[2]


# ---------------------------------------------------------------- QA

_WS = re.compile(r"\s+")


def normalize_answer(s: str) -> str:
    """Drop punctuation and collapse whitespace.  No lowercasing of Hebrew is
    needed and there is no article stripping."""
    s = "".join(" " if unicodedata.category(ch)[0] == "P" else ch for ch in s)
    return _WS.sub(" ", s).strip()


def _exact(pred: str, gold: str) -> float:
    return float(normalize_answer(pred) == normalize_answer(gold))


def _overlap_f1(pred: str, gold: str) -> float:
    p = normalize_answer(pred).split()
    g = normalize_answer(gold).split()
    if not p and not g:
        return 1.0
    common = sum((Counter(p) & Counter(g)).values())
    if not common:
        return 0.0
    prec = common / len(p)
    rec = common / len(g)
    return 2 * prec * rec / (prec + rec)


@dataclass(frozen=True)
class QaPrediction:
    prediction: str
    gold: Sequence[str]


def qa_item_scores(item: QaPrediction) -> tuple[float, float]:
    if not item.gold:
        raise ValueError("empty gold answer list")
    return (max(_exact(item.prediction, g) for g in item.gold),
            max(_overlap_f1(item.prediction, g) for g in item.gold))


def qa_em_f1(items: Sequence[QaPrediction]) -> tuple[float, float]:
    """Mean best-over-gold exact match and token-overlap F1, as percentages."""
    if not items:
        raise ValueError("no QA items")
    scores = [qa_item_scores(it) for it in items]
    return (100 * sum(s[0] for s in scores) / len(scores),
            100 * sum(s[1] for s in scores) / len(scores))


# ---------------------------------------------------------------- sentiment

def accuracy(gold: Sequence, pred: Sequence) -> float:
    check_same_length(gold, pred, "gold and predicted labels")
    if not gold:
        return 0.0
    return sum(g == p for g, p in zip(gold, pred)) / len(gold)
