"""Per-word morphological analysis from five classifier heads.

The heads give: a POS distribution, independent proclitic-function
probabilities, one distribution per morphological feature, a suffix-function
distribution (including "no suffix"), and suffix feature distributions.
The suffix feature head is only read when the suffix head says a suffix is
present.
"""
from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .proclitic import DEFAULT_GRAMMAR, ProcliticGrammar, SegmentationResult, decode
from .validation import check_finite_scores, check_probabilities

NA = "NA"

POS_TAGS = ("ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART",
            "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X")

FEATURE_VALUES: dict[str, tuple[str, ...]] = {
    "gender": ("Masc", "Fem", "MascFem", NA),
    "number": ("Sing", "Plur", "Dual", NA),
    "person": ("1", "2", "3", NA),
    "tense": ("Past", "Present", "Future", "Imperative", NA),
}
SUFFIX_FUNCTIONS = ("None", "Possessive", "Objective", "PronominalNominal")
SUFFIX_FEATURES = ("gender", "number", "person")


@dataclass(frozen=True)
class MorphScheme:
    """Label inventories; list order is the tie-break order."""

    pos_tags: tuple[str, ...] = POS_TAGS
    features: Mapping[str, tuple[str, ...]] = field(default_factory=lambda: dict(FEATURE_VALUES))
    suffix_functions: tuple[str, ...] = SUFFIX_FUNCTIONS
    suffix_features: tuple[str, ...] = SUFFIX_FEATURES

    def __post_init__(self):
        if self.suffix_functions[0] != "None":
            raise ValueError("the first suffix function must be 'None'")
        for slot in self.suffix_features:
            if slot not in self.features or NA not in self.features[slot]:
                raise ValueError(f"suffix feature {slot!r} needs an NA value")
        for slot, values in self.features.items():
            if NA not in values:
                raise ValueError(f"feature {slot!r} needs an NA value")

    def na_features(self) -> dict[str, str]:
        return {slot: NA for slot in self.features}

    @classmethod
    def from_dict(cls, obj: Mapping) -> "MorphScheme":
        return cls(
            tuple(obj.get("pos_tags", POS_TAGS)),
            {k: tuple(v) for k, v in obj.get("features", FEATURE_VALUES).items()},
            tuple(obj.get("suffix_functions", SUFFIX_FUNCTIONS)),
            tuple(obj.get("suffix_features", SUFFIX_FEATURES)),
        )


DEFAULT_SCHEME = MorphScheme()


@dataclass
class LogitBundle:
    """Raw outputs of the five heads for one word."""

    pos_scores: np.ndarray
    proclitic_probs: np.ndarray
    feature_scores: dict[str, np.ndarray]
    suffix_function_scores: np.ndarray
    suffix_feature_scores: dict[str, np.ndarray]

    @classmethod
    def from_dict(cls, obj: Mapping) -> "LogitBundle":
        return cls(
            np.asarray(obj["pos"], dtype=float),
            np.asarray(obj["prefixes"], dtype=float),
            {k: np.asarray(v, dtype=float) for k, v in obj["features"].items()},
            np.asarray(obj["suffix"], dtype=float),
            {k: np.asarray(v, dtype=float) for k, v in obj.get("suffix_features", {}).items()},
        )

    def to_dict(self) -> dict:
        return {
            "pos": self.pos_scores.tolist(),
            "prefixes": self.proclitic_probs.tolist(),
            "features": {k: v.tolist() for k, v in self.feature_scores.items()},
            "suffix": self.suffix_function_scores.tolist(),
            "suffix_features": {k: v.tolist() for k, v in self.suffix_feature_scores.items()},
        }


@dataclass(frozen=True)
class SuffixAnalysis:
    function: str = "None"
    features: Mapping[str, str] = field(default_factory=dict)

    @property
    def present(self) -> bool:
        return self.function != "None"


@dataclass(frozen=True)
class WordAnalysis:
    word: str
    pos: str
    features: Mapping[str, str]
    proclitics: SegmentationResult
    suffix: SuffixAnalysis


def _argmax(scores: np.ndarray, labels: Sequence[str], name: str) -> str:
    arr = check_finite_scores(scores, name)
    if arr.size != len(labels):
        raise ValueError(f"{name}: expected {len(labels)} scores, got {arr.size}")
    # np.argmax returns the first maximum, i.e. inventory order breaks ties
    return labels[int(np.argmax(arr))]


def _check_bundle(bundle: LogitBundle, scheme: MorphScheme) -> None:
    arrays = [bundle.pos_scores, bundle.suffix_function_scores, *bundle.feature_scores.values(),
              *bundle.suffix_feature_scores.values()]
    for a in arrays:
        if np.any(np.isnan(np.asarray(a, dtype=float))):
            raise ValueError("invalid score")
    if np.any(np.isnan(np.asarray(bundle.proclitic_probs, dtype=float))):
        raise ValueError("invalid score")
    missing = set(scheme.features) - set(bundle.feature_scores)
    if missing:
        raise ValueError(f"bundle lacks feature scores for {sorted(missing)}")


def decode_word(word: str, bundle: LogitBundle, grammar: ProcliticGrammar = DEFAULT_GRAMMAR,
                scheme: MorphScheme = DEFAULT_SCHEME) -> WordAnalysis:
    """Argmax every head; suffix features are read only when a suffix is predicted."""
    if not word:
        raise ValueError("empty word")
    _check_bundle(bundle, scheme)
    pos = _argmax(bundle.pos_scores, scheme.pos_tags, "pos")
    feats = {slot: _argmax(bundle.feature_scores[slot], values, slot)
             for slot, values in scheme.features.items()}
    check_probabilities(bundle.proclitic_probs, len(grammar), "prefixes")
    proclitics = decode(word, bundle.proclitic_probs, grammar)
    func = _argmax(bundle.suffix_function_scores, scheme.suffix_functions, "suffix")
    if func == "None":
        suffix = SuffixAnalysis("None", {slot: NA for slot in scheme.suffix_features})
    else:
        missing = set(scheme.suffix_features) - set(bundle.suffix_feature_scores)
        if missing:
            raise ValueError(f"bundle lacks suffix feature scores for {sorted(missing)}")
        suffix = SuffixAnalysis(func, {
            slot: _argmax(bundle.suffix_feature_scores[slot], scheme.features[slot], f"suffix {slot}")
            for slot in scheme.suffix_features})
    return WordAnalysis(word, pos, feats, proclitics, suffix)


def decode_sentence(words: Sequence[str], bundles: Sequence[LogitBundle], tokenization=None,
                    grammar: ProcliticGrammar = DEFAULT_GRAMMAR, scheme: MorphScheme = DEFAULT_SCHEME,
                    offset: int = 1) -> list[WordAnalysis]:
    """Analyse every word of a sentence.

    Without ``tokenization`` there is one bundle per word.  With it,
    ``bundles`` holds one bundle per model-input position and each word reads
    the bundle at its first word-piece (shifted by ``offset`` for [CLS]).
    """
    if tokenization is None:
        if len(bundles) != len(words):
            raise ValueError(f"{len(words)} words but {len(bundles)} bundles")
        return [decode_word(w, b, grammar, scheme) for w, b in zip(words, bundles)]
    firsts = tokenization.first_piece_positions()
    if len(firsts) != len(words):
        raise ValueError(f"{len(words)} words but tokenization has {len(firsts)}")
    if firsts and firsts[-1] + offset >= len(bundles):
        raise ValueError(f"{len(bundles)} bundles do not cover every word's first piece")
    return [decode_word(w, bundles[p + offset], grammar, scheme) for w, p in zip(words, firsts)]


# --------------------------------------------------------------------------
# JSON rendering
# --------------------------------------------------------------------------

def _analysis_dict(a: WordAnalysis) -> dict:
    return {
        "word": a.word,
        "pos": a.pos,
        "feats": dict(a.features),
        "prefixes": [{"surface": s, "function": f} for s, f in a.proclitics.prefix_segments],
        "base": a.proclitics.base,
        "prefix_score": a.proclitics.score,
        "suffix": {"function": a.suffix.function, "feats": dict(a.suffix.features)},
    }


def render_analysis(analysis: Sequence[WordAnalysis]) -> str:
    """Canonical JSON: fixed key order, NA values written out, UTF-8 kept."""
    return json.dumps([_analysis_dict(a) for a in analysis], ensure_ascii=False)


def parse_analysis(text: str) -> list[WordAnalysis]:
    out = []
    for obj in json.loads(text):
        segs = tuple((p["surface"], p["function"]) for p in obj["prefixes"])
        seg = SegmentationResult(tuple(f for _, f in segs), segs, obj["base"], float(obj["prefix_score"]))
        suffix = SuffixAnalysis(obj["suffix"]["function"], dict(obj["suffix"]["feats"]))
        out.append(WordAnalysis(obj["word"], obj["pos"], dict(obj["feats"]), seg, suffix))
    return out


class MorphTagger(BaseEstimator):
    """``predict(sentences)`` where each sentence is a list of
    ``(word, LogitBundle)`` pairs."""

    def __init__(self, grammar=None, scheme=None):
        self.grammar = grammar
        self.scheme = scheme

    def fit(self, X=None, y=None):
        g = self.grammar
        self.grammar_ = DEFAULT_GRAMMAR if g is None else (g if isinstance(g, ProcliticGrammar) else ProcliticGrammar.load(g))
        s = self.scheme
        self.scheme_ = DEFAULT_SCHEME if s is None else (s if isinstance(s, MorphScheme) else MorphScheme.from_dict(s))
        return self

    def predict(self, X):
        if not hasattr(self, "grammar_"):
            self.fit()
        out = []
        for sent in X:
            words = [w for w, _ in sent]
            bundles = [b if isinstance(b, LogitBundle) else LogitBundle.from_dict(b) for _, b in sent]
            out.append(decode_sentence(words, bundles, None, self.grammar_, self.scheme_))
        return out
