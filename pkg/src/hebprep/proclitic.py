"""Constrained decoding of Hebrew proclitic functions.

A word-initial prefix is analysed as an ordered sequence of proclitic
functions drawn from four slots::

    [ו] [ש | כש] [ב | כ | ל | מ] [ה]

The definite article is covert (spelled with no letter) after ב/כ/ל and
overt elsewhere.  Given eight independent per-function probabilities, the
decoder returns the highest scoring analysis among those the word's
spelling admits.
"""
from __future__ import annotations

import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .pretokenizer import is_hebrew_letter
from .validation import check_probabilities

EPS = 1e-7


class ProcliticFunction(str, Enum):
    CCONJ_VAV = "CCONJ_VAV"
    SCONJ_SHE = "SCONJ_SHE"
    SCONJ_KSHE = "SCONJ_KSHE"
    ADP_BE = "ADP_BE"
    ADP_KE = "ADP_KE"
    ADP_LE = "ADP_LE"
    ADP_MIN = "ADP_MIN"
    DET_HE = "DET_HE"


@dataclass(frozen=True)
class FunctionSpec:
    name: str
    surface: str
    tag: str
    slot: int


@dataclass(frozen=True)
class ProcliticGrammar:
    """Slot grammar over proclitic functions.

    ``functions`` fixes the index order of probability vectors.  ``covert``
    maps a function to the set of functions after which it is spelled with
    no letter.
    """

    functions: tuple[FunctionSpec, ...]
    covert: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        names = [f.name for f in self.functions]
        if len(set(names)) != len(names):
            raise ValueError("duplicate function names in grammar")
        for f in self.functions:
            if not f.surface:
                raise ValueError(f"function {f.name} has an empty surface")
        for name, lic in self.covert.items():
            unknown = ({name} | set(lic)) - set(names)
            if unknown:
                raise ValueError(f"covert rule refers to unknown functions {sorted(unknown)}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.functions)

    def __len__(self) -> int:
        return len(self.functions)

    def index(self, name: str) -> int:
        return self.names.index(name)

    @property
    def slots(self) -> list[list[FunctionSpec]]:
        order = sorted({f.slot for f in self.functions})
        return [[f for f in self.functions if f.slot == s] for s in order]

    def surface_of(self, name: str, previous: Sequence[str]) -> str:
        spec = self.functions[self.index(name)]
        if self.covert.get(name, frozenset()) & set(previous):
            return ""
        return spec.surface

    @classmethod
    def default(cls) -> "ProcliticGrammar":
        F = ProcliticFunction
        fs = (
            FunctionSpec(F.CCONJ_VAV.value, "ו", "CCONJ", 1),
            FunctionSpec(F.SCONJ_SHE.value, "ש", "SCONJ", 2),
            FunctionSpec(F.SCONJ_KSHE.value, "כש", "SCONJ", 2),
            FunctionSpec(F.ADP_BE.value, "ב", "ADP", 3),
            FunctionSpec(F.ADP_KE.value, "כ", "ADP", 3),
            FunctionSpec(F.ADP_LE.value, "ל", "ADP", 3),
            FunctionSpec(F.ADP_MIN.value, "מ", "ADP", 3),
            FunctionSpec(F.DET_HE.value, "ה", "DET", 4),
        )
        return cls(fs, {F.DET_HE.value: frozenset({F.ADP_BE.value, F.ADP_KE.value, F.ADP_LE.value})})

    def to_dict(self) -> dict:
        return {
            "functions": [{"name": f.name, "surface": f.surface, "tag": f.tag, "slot": f.slot}
                          for f in self.functions],
            "covert": {k: sorted(v) for k, v in self.covert.items()},
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "ProcliticGrammar":
        fs = tuple(FunctionSpec(str(f["name"]), str(f["surface"]), str(f.get("tag", "")), int(f["slot"]))
                   for f in obj["functions"])
        return cls(fs, {k: frozenset(v) for k, v in obj.get("covert", {}).items()})

    @classmethod
    def load(cls, path: str | Path) -> "ProcliticGrammar":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


DEFAULT_GRAMMAR = ProcliticGrammar.default()


@dataclass(frozen=True)
class SegmentationResult:
    functions: tuple[str, ...]
    prefix_segments: tuple[tuple[str, str], ...]
    base: str
    score: float

    @property
    def consumed(self) -> int:
        return sum(len(s) for s, _ in self.prefix_segments)

    @property
    def segments(self) -> list[str]:
        """Surface pieces, prefixes first then the base; covert ones omitted."""
        return [s for s, _ in self.prefix_segments if s] + [self.base]


def valid_function_sets(word: str, grammar: ProcliticGrammar = DEFAULT_GRAMMAR) -> list[tuple[tuple[str, ...], int]]:
    """All function sequences the grammar accepts whose spelling is a proper
    prefix of ``word``, as ``(functions, consumed_letters)``.

    The empty sequence always comes first.  Words not starting with a
    Hebrew letter admit only the empty sequence.
    """
    if not word:
        raise ValueError("empty word")
    out: list[tuple[tuple[str, ...], int]] = []
    slots = grammar.slots
    hebrew = is_hebrew_letter(word[0])

    def walk(slot: int, chosen: tuple[str, ...], pos: int) -> None:
        if slot == len(slots):
            out.append((chosen, pos))
            return
        walk(slot + 1, chosen, pos)
        if not hebrew:
            return
        for spec in slots[slot]:
            surf = grammar.surface_of(spec.name, chosen)
            end = pos + len(surf)
            # the base must keep at least one letter
            if end < len(word) and word.startswith(surf, pos):
                walk(slot + 1, chosen + (spec.name,), end)

    walk(0, (), 0)
    return out


def _clamped_logs(probs, n: int) -> tuple[np.ndarray, np.ndarray]:
    p = np.clip(check_probabilities(probs, n), EPS, 1 - EPS)
    return np.log(p), np.log1p(-p)


def _score(chosen: set[int], log_p: np.ndarray, log_q: np.ndarray) -> float:
    # fixed summation order keeps scores bit-identical across decoders
    total = 0.0
    for i in range(len(log_p)):
        total += float(log_p[i]) if i in chosen else float(log_q[i])
    return total


def _rank_key(score: float, idx: Sequence[int]) -> tuple:
    return (-score, len(idx), tuple(sorted(idx)))


def _result(word: str, names: Sequence[str], consumed: int, score: float,
            grammar: ProcliticGrammar) -> SegmentationResult:
    segs = []
    for k, name in enumerate(names):
        segs.append((grammar.surface_of(name, names[:k]), name))
    return SegmentationResult(tuple(names), tuple(segs), word[consumed:], score)


def decode(word: str, probs, grammar: ProcliticGrammar = DEFAULT_GRAMMAR) -> SegmentationResult:
    """Best valid analysis of ``word``.

    A set S scores ``sum(log p_f, f in S) + sum(log(1 - p_f), f not in S)``
    with probabilities clamped to ``[1e-7, 1 - 1e-7]``.  Ties go to fewer
    functions, then to the lexicographically smallest function indices.
    """
    log_p, log_q = _clamped_logs(probs, len(grammar))
    best = None
    for names, consumed in valid_function_sets(word, grammar):
        idx = [grammar.index(n) for n in names]
        s = _score(set(idx), log_p, log_q)
        key = _rank_key(s, idx)
        if best is None or key < best[0]:
            best = (key, names, consumed, s)
    _, names, consumed, s = best
    return _result(word, names, consumed, s, grammar)


def _realize(subset: Sequence[int], word: str, grammar: ProcliticGrammar) -> tuple[list[str], int] | None:
    """Order a subset by slot and spell it out; None if it cannot prefix ``word``."""
    specs = [grammar.functions[i] for i in subset]
    slots = [s.slot for s in specs]
    if len(set(slots)) != len(slots):
        return None
    specs.sort(key=lambda s: s.slot)
    names: list[str] = []
    spelled = ""
    for spec in specs:
        lic = grammar.covert.get(spec.name, frozenset())
        spelled += "" if lic & set(names) else spec.surface
        names.append(spec.name)
    if specs and not is_hebrew_letter(word[0]):
        return None
    if len(spelled) >= len(word) or not word.startswith(spelled):
        return None
    return names, len(spelled)


def brute_force_decode(word: str, probs, grammar: ProcliticGrammar = DEFAULT_GRAMMAR) -> SegmentationResult:
    """Reference decoder: score every subset of functions and keep the best
    one that can be spelled as a prefix of ``word``."""
    if not word:
        raise ValueError("empty word")
    log_p, log_q = _clamped_logs(probs, len(grammar))
    n = len(grammar)
    best = None
    for size in range(n + 1):
        for subset in combinations(range(n), size):
            real = _realize(subset, word, grammar)
            if real is None:
                continue
            s = _score(set(subset), log_p, log_q)
            key = _rank_key(s, subset)
            if best is None or key < best[0]:
                best = (key, real, s)
    _, (names, consumed), s = best
    return _result(word, names, consumed, s, grammar)


def first_piece_gate(word: str | int, tokenization, occurrence: int = 0, offset: int = 1) -> int:
    """Model-input position whose outputs drive the analysis of ``word``.

    ``word`` is a pre-token string (its ``occurrence``-th appearance) or a
    pre-token index.  ``offset`` accounts for a leading [CLS].
    """
    if isinstance(word, int):
        w = word
        if not 0 <= w < tokenization.n_words:
            raise ValueError(f"word index {w} out of range")
    else:
        hits = [i for i, pt in enumerate(tokenization.pretokens) if pt.text == word]
        if len(hits) <= occurrence:
            raise ValueError(f"word {word!r} not found in tokenization")
        w = hits[occurrence]
    for pos, (wi, first) in enumerate(zip(tokenization.word_index, tokenization.is_first)):
        if wi == w and first:
            return pos + offset
    raise ValueError(f"word {word!r} has no pieces")


def result_to_dict(res: SegmentationResult) -> dict:
    return {
        "functions": list(res.functions),
        "segments": res.segments,
        "base": res.base,
        "score": res.score,
    }


class ProcliticSegmenter(BaseEstimator):
    """``predict(words, probs)`` decodes each word under a grammar."""

    def __init__(self, grammar=None):
        self.grammar = grammar

    def fit(self, X=None, y=None):
        g = self.grammar
        if g is None:
            g = DEFAULT_GRAMMAR
        elif not isinstance(g, ProcliticGrammar):
            g = ProcliticGrammar.load(g)
        self.grammar_ = g
        return self

    def predict(self, words: Sequence[str], probs) -> list[SegmentationResult]:
        if not hasattr(self, "grammar_"):
            self.fit()
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 2 or len(probs) != len(words):
            raise ValueError("probs must be an (n_words, n_functions) array")
        return [decode(w, p, self.grammar_) for w, p in zip(words, probs)]
