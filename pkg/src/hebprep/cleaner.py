"""Streaming corpus filters: minimum length, script ratio, gibberish
heuristics and an optional pluggable document scorer.
"""
from __future__ import annotations

import json
import logging
import math
import unicodedata
from collections import Counter
from collections.abc import Iterable, Iterator, Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from itertools import islice
from typing import Protocol

from sklearn.base import BaseEstimator, TransformerMixin

logger = logging.getLogger(__name__)

FILTERS = ("min_words", "script_ratio", "gibberish", "scorer")


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    source: str = ""

    @classmethod
    def from_json(cls, line: str | Mapping) -> "Document":
        obj = json.loads(line) if isinstance(line, str) else line
        if not isinstance(obj, Mapping) or not isinstance(obj.get("text"), str):
            raise ValueError("document record needs a string 'text' field")
        return cls(str(obj.get("id", "")), obj["text"], str(obj.get("source", "")))

    def to_json(self) -> str:
        return json.dumps({"id": self.id, "text": self.text, "source": self.source}, ensure_ascii=False)


@dataclass(frozen=True)
class FilterConfig:
    min_words: int = 50
    max_foreign_char_ratio: float = 0.10
    max_repeat_run: int = 20
    entropy_low: float = 2.0
    entropy_high: float = 6.0
    min_letter_ratio: float = 0.5
    scorer_threshold: float = math.inf
    enable_min_words: bool = True
    enable_script_ratio: bool = True
    enable_gibberish: bool = True
    enable_scorer: bool = True
    # source tag -> {field: value}
    source_overrides: Mapping[str, Mapping] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("min_words", "max_foreign_char_ratio", "max_repeat_run", "entropy_low",
                     "entropy_high", "min_letter_ratio"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        for name in ("max_foreign_char_ratio", "min_letter_ratio"):
            if getattr(self, name) > 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.entropy_low > self.entropy_high:
            raise ValueError("entropy_low exceeds entropy_high")
        if math.isnan(self.scorer_threshold):
            raise ValueError("scorer_threshold is NaN")
        valid = {f.name for f in fields(self)} - {"source_overrides"}
        for src, over in self.source_overrides.items():
            bad = set(over) - valid
            if bad:
                raise ValueError(f"unknown override keys for source {src!r}: {sorted(bad)}")

    @property
    def entropy_bounds(self) -> tuple[float, float]:
        return self.entropy_low, self.entropy_high

    def for_source(self, source: str) -> "FilterConfig":
        over = self.source_overrides.get(source)
        if not over:
            return self
        return replace(self, source_overrides={}, **over)

    def enabled(self, name: str) -> bool:
        return getattr(self, f"enable_{name}")


# --------------------------------------------------------------------------
# individual filters (pure predicates)
# --------------------------------------------------------------------------

def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] == "P"


def count_words(text: str) -> int:
    """Whitespace tokens, not counting tokens made only of punctuation."""
    return sum(1 for tok in text.split() if not all(_is_punct(c) for c in tok))


def filter_min_words(doc: Document, min_words: int = 50) -> bool:
    """True to keep."""
    return count_words(doc.text) >= min_words


def _script(ch: str) -> str | None:
    """'hebrew', 'latin', 'other' for letters; None for non-letters."""
    if unicodedata.category(ch)[0] != "L":
        return None
    name = unicodedata.name(ch, "")
    if name.startswith("HEBREW"):
        return "hebrew"
    if name.startswith("LATIN"):
        return "latin"
    return "other"


def script_ratio(doc: Document | str) -> float:
    """Fraction of letters that are neither Hebrew nor Latin (1.0 if no letters)."""
    text = doc if isinstance(doc, str) else doc.text
    letters = foreign = 0
    for ch in text:
        s = _script(ch)
        if s is None:
            continue
        letters += 1
        foreign += s == "other"
    return foreign / letters if letters else 1.0


def filter_script_ratio(doc: Document, max_ratio: float = 0.10) -> bool:
    return script_ratio(doc) <= max_ratio


def longest_run(text: str) -> int:
    """Longest run of one repeated non-whitespace character."""
    best = run = 0
    prev = None
    for ch in text:
        if ch == prev and not ch.isspace():
            run += 1
        else:
            run = 0 if ch.isspace() else 1
        prev = ch
        best = max(best, run)
    return best


def char_entropy(text: str) -> float:
    """Shannon entropy (bits/char) of the non-whitespace character histogram."""
    hist = Counter(ch for ch in text if not ch.isspace())
    total = sum(hist.values())
    if not total:
        return 0.0
    return -sum(c / total * math.log2(c / total) for c in hist.values())


def letter_ratio(text: str) -> float:
    chars = [ch for ch in text if not ch.isspace()]
    if not chars:
        return 0.0
    return sum(unicodedata.category(ch)[0] == "L" for ch in chars) / len(chars)


@dataclass(frozen=True)
class GibberishResult:
    score: float
    keep: bool
    longest_run: int
    entropy: float
    letter_ratio: float
    tripped: tuple[str, ...]


def gibberish_score(doc: Document | str, config: FilterConfig = FilterConfig()) -> GibberishResult:
    """Composite of three histogram checks.

    Each sub-score lies in [0, 1] and reaches 1 at its threshold; the score
    is their maximum.  The document is dropped if any check trips.
    """
    text = doc if isinstance(doc, str) else doc.text
    run = longest_run(text)
    ent = char_entropy(text)
    lr = letter_ratio(text)
    low, high = config.entropy_bounds

    tripped = []
    if run > config.max_repeat_run:
        tripped.append("repeat_run")
    if ent < low or ent > high:
        tripped.append("entropy")
    if lr < config.min_letter_ratio:
        tripped.append("letter_ratio")

    run_s = min(1.0, run / (config.max_repeat_run + 1))
    half = (high - low) / 2
    if ent < low or ent > high or half == 0:
        ent_s = 1.0
    else:
        ent_s = 1.0 - min(ent - low, high - ent) / half
    if lr < config.min_letter_ratio:
        lr_s = 1.0
    elif config.min_letter_ratio >= 1:
        lr_s = 0.0
    else:
        lr_s = (1.0 - lr) / (1.0 - config.min_letter_ratio)
    return GibberishResult(max(run_s, ent_s, lr_s), not tripped, run, ent, lr, tuple(tripped))


# --------------------------------------------------------------------------
# scorers
# --------------------------------------------------------------------------

class DocumentScorer(Protocol):
    """Anything with ``score(doc) -> float``; higher means worse.  Documents
    scoring above ``FilterConfig.scorer_threshold`` are dropped."""

    def score(self, doc: Document) -> float: ...


class CharTrigramScorer(BaseEstimator):
    """Character-trigram model returning cross-entropy in bits/char.

    A cheap stand-in for a masked-LM perplexity filter; fit it on trusted
    text and threshold on its score.
    """

    def __init__(self, alpha=0.1):
        self.alpha = alpha

    def fit(self, X, y=None):
        tri: Counter = Counter()
        bi: Counter = Counter()
        chars = set()
        for doc in X:
            t = "\x02\x02" + (doc if isinstance(doc, str) else doc.text) + "\x03"
            chars.update(t)
            for i in range(2, len(t)):
                tri[t[i - 2:i + 1]] += 1
                bi[t[i - 2:i]] += 1
        self.trigrams_ = tri
        self.bigrams_ = bi
        self.n_chars_ = len(chars) + 1
        return self

    def score(self, doc) -> float:
        t = "\x02\x02" + (doc if isinstance(doc, str) else doc.text) + "\x03"
        n = len(t) - 2
        total = 0.0
        for i in range(2, len(t)):
            num = self.trigrams_.get(t[i - 2:i + 1], 0) + self.alpha
            den = self.bigrams_.get(t[i - 2:i], 0) + self.alpha * self.n_chars_
            total -= math.log2(num / den)
        return total / n


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------

@dataclass
class CleanReport:
    examined: dict[str, int] = field(default_factory=lambda: dict.fromkeys(FILTERS, 0))
    dropped: dict[str, int] = field(default_factory=lambda: dict.fromkeys(FILTERS, 0))
    kept: int = 0
    total: int = 0
    scorer_error: int = 0
    parse_error: int = 0
    drop_reasons: dict[str, str] = field(default_factory=dict)
    max_reasons: int = 10_000

    def record(self, doc_id: str, verdict: str | None, scorer_error: bool = False) -> None:
        self.total += 1
        self.scorer_error += scorer_error
        for name in FILTERS:
            self.examined[name] += 1
            if name == verdict:
                self.dropped[name] += 1
                if len(self.drop_reasons) < self.max_reasons:
                    self.drop_reasons[doc_id] = name
                return
        self.kept += 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("max_reasons")
        d["filters"] = {n: {"examined": self.examined[n], "dropped": self.dropped[n]} for n in FILTERS}
        del d["examined"], d["dropped"]
        return d


def first_failing_filter(doc: Document, config: FilterConfig, scorer: DocumentScorer | None = None) -> tuple[str | None, bool]:
    """Name of the first filter that drops ``doc`` (None if kept) and whether
    the scorer raised."""
    cfg = config.for_source(doc.source)
    if cfg.enable_min_words and not filter_min_words(doc, cfg.min_words):
        return "min_words", False
    if cfg.enable_script_ratio and not filter_script_ratio(doc, cfg.max_foreign_char_ratio):
        return "script_ratio", False
    if cfg.enable_gibberish and not gibberish_score(doc, cfg).keep:
        return "gibberish", False
    if scorer is not None and cfg.enable_scorer:
        try:
            s = scorer.score(doc)
        except Exception:
            logger.warning("scorer failed on document %r; keeping it", doc.id, exc_info=True)
            return None, True
        if s > cfg.scorer_threshold:
            return "scorer", False
    return None, False


def clean_corpus(
    stream: Iterable[Document],
    config: FilterConfig = FilterConfig(),
    scorer: DocumentScorer | None = None,
    threads: int = 1,
    chunk_size: int = 256,
) -> tuple[Iterator[Document], CleanReport]:
    """Filter a document stream lazily.

    Returns ``(kept, report)``; ``report`` is filled in as ``kept`` is
    consumed.  Input order is preserved for any ``threads`` value.
    """
    report = CleanReport()

    def verdicts(chunk):
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                return list(pool.map(lambda d: first_failing_filter(d, config, scorer), chunk))
        return [first_failing_filter(d, config, scorer) for d in chunk]

    def run() -> Iterator[Document]:
        it = iter(stream)
        while True:
            chunk = list(islice(it, chunk_size))
            if not chunk:
                break
            for doc, (verdict, err) in zip(chunk, verdicts(chunk)):
                report.record(doc.id, verdict, err)
                if verdict is None:
                    yield doc

    return run(), report


class CorpusCleaner(TransformerMixin, BaseEstimator):
    """Estimator face of :func:`clean_corpus`; ``transform`` returns the kept
    documents and leaves the audit trail in ``report_``."""

    def __init__(self, min_words=50, max_foreign_char_ratio=0.10, max_repeat_run=20,
                 entropy_low=2.0, entropy_high=6.0, min_letter_ratio=0.5,
                 scorer=None, scorer_threshold=math.inf, threads=1):
        self.min_words = min_words
        self.max_foreign_char_ratio = max_foreign_char_ratio
        self.max_repeat_run = max_repeat_run
        self.entropy_low = entropy_low
        self.entropy_high = entropy_high
        self.min_letter_ratio = min_letter_ratio
        self.scorer = scorer
        self.scorer_threshold = scorer_threshold
        self.threads = threads

    def _config(self) -> FilterConfig:
        return FilterConfig(
            min_words=self.min_words, max_foreign_char_ratio=self.max_foreign_char_ratio,
            max_repeat_run=self.max_repeat_run, entropy_low=self.entropy_low,
            entropy_high=self.entropy_high, min_letter_ratio=self.min_letter_ratio,
            scorer_threshold=self.scorer_threshold,
        )

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        return self

    def transform(self, X):
        if not hasattr(self, "config_"):
            self.fit()
        docs = [x if isinstance(x, Document) else Document(str(i), x) for i, x in enumerate(X)]
        kept, self.report_ = clean_corpus(docs, self.config_, self.scorer, self.threads)
        return list(kept)
