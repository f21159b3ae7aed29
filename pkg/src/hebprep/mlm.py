"""Masked-LM training instances built from cleaned documents.

Differences from the stock BERT recipe:

* only words that encode to a single word-piece may be masked;
* instances are packed from whole sentences, never truncated mid-sentence;
* a fraction of instances get one inserted slot whose label is [BLANK];
* instances containing [UNK] are discarded.
"""
from __future__ import annotations

import json
import logging
import re
from collections.abc import Iterable, Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .cleaner import Document
from .wordpiece import TokenizedText, Vocabulary, WordPieceTokenizer

logger = logging.getLogger(__name__)

_SENT_BREAK = re.compile(r"(?<=[.!?׃])\s+(?=[A-Zא-ת])")


@dataclass(frozen=True)
class BuilderConfig:
    max_len: int = 512
    mask_rate: float = 0.15
    replace_probs: tuple[float, float, float] = (0.8, 0.1, 0.1)
    blank_instance_prob: float = 0.10
    blank_mode: str = "mask"
    seed: int = 0

    def __post_init__(self):
        if self.max_len < 8:
            raise ValueError("max_len must be at least 8")
        probs = (self.mask_rate, self.blank_instance_prob, *self.replace_probs)
        if any(not 0 <= p <= 1 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if len(self.replace_probs) != 3 or abs(sum(self.replace_probs) - 1) > 1e-9:
            raise ValueError("replace_probs must be three values summing to 1")
        if self.blank_mode not in ("mask", "intruder"):
            raise ValueError(f"unknown blank_mode {self.blank_mode!r}")


# max_len profiles for the short- and long-sequence training phases
PHASE_SHORT = BuilderConfig(max_len=256)
PHASE_LONG = BuilderConfig(max_len=512)


@dataclass
class TrainingInstance:
    token_ids: list[int]
    # per position: index of the source word inside the instance, -1 for specials
    word_ids: list[int]
    # per word: number of pieces
    word_pieces: list[int]
    doc_id: str = ""
    sentence_count: int = 0
    mlm_positions: list[int] = field(default_factory=list)
    mlm_labels: list[int] = field(default_factory=list)
    has_blank: bool = False

    def __len__(self) -> int:
        return len(self.token_ids)

    def to_json(self) -> str:
        return json.dumps({
            "doc_id": self.doc_id,
            "token_ids": self.token_ids,
            "mlm_positions": self.mlm_positions,
            "mlm_labels": self.mlm_labels,
            "has_blank": self.has_blank,
        }, ensure_ascii=False)


@dataclass
class BuildReport:
    documents: int = 0
    parse_errors: int = 0
    sentences: int = 0
    instances: int = 0
    dropped_unk: int = 0
    dropped_oversize: int = 0
    blanks: int = 0
    blank_skipped: int = 0
    masked_positions: int = 0
    candidate_positions: int = 0
    zero_candidate_instances: int = 0

    def merge(self, other: "BuildReport") -> None:
        for k, v in asdict(other).items():
            setattr(self, k, getattr(self, k) + v)

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------

def split_sentences(text: str) -> list[str]:
    """Break after . ! ? or sof pasuq when whitespace and then a capital or
    Hebrew letter follow.  Abbreviation quotes never end a sentence."""
    return [s for s in (p.strip() for p in _SENT_BREAK.split(text)) if s]


def pack_instances(sentences: Sequence[TokenizedText], max_len: int, vocab: Vocabulary,
                   doc_id: str = "", report: BuildReport | None = None) -> list[TrainingInstance]:
    """Greedily pack whole sentences as ``[CLS] s1 [SEP] s2 [SEP] ...``.

    A sentence that cannot fit even alone (more than ``max_len - 2`` pieces)
    is dropped; nothing is ever truncated.
    """
    out: list[TrainingInstance] = []
    cur: list[TokenizedText] = []
    cur_len = 1

    def close():
        if cur:
            out.append(_assemble(cur, vocab, doc_id))

    for sent in sentences:
        if len(sent) == 0:
            continue
        need = len(sent) + 1
        if need + 1 > max_len:
            if report is not None:
                report.dropped_oversize += 1
            continue
        if cur_len + need > max_len:
            close()
            cur, cur_len = [], 1
        cur.append(sent)
        cur_len += need
    close()
    return out


def _assemble(sentences: Sequence[TokenizedText], vocab: Vocabulary, doc_id: str) -> TrainingInstance:
    ids = [vocab.cls_id]
    word_ids = [-1]
    pieces: list[int] = []
    for sent in sentences:
        base = len(pieces)
        ids.extend(sent.ids)
        word_ids.extend(base + w for w in sent.word_index)
        pieces.extend(sent.piece_counts())
        ids.append(vocab.sep_id)
        word_ids.append(-1)
    return TrainingInstance(ids, word_ids, pieces, doc_id, len(sentences))


def reject_unk(instance: TrainingInstance, vocab: Vocabulary) -> bool:
    """True to keep: the instance holds no [UNK]."""
    return vocab.unk_id not in instance.token_ids


def select_mask_candidates(instance: TrainingInstance) -> list[int]:
    """Positions of words that are a single word-piece."""
    return [p for p, w in enumerate(instance.word_ids) if w >= 0 and instance.word_pieces[w] == 1]


def mask_count(rate: float, n_candidates: int) -> int:
    # Python's round() is half-to-even
    return max(0, round(rate * n_candidates))


def apply_masking(instance: TrainingInstance, config: BuilderConfig, vocab: Vocabulary,
                  rng: np.random.Generator, candidates: Sequence[int] | None = None) -> TrainingInstance:
    """Pick ``round(mask_rate * |candidates|)`` candidates; each becomes
    [MASK], a random non-special id or stays, per ``replace_probs``."""
    if candidates is None:
        candidates = select_mask_candidates(instance)
    k = mask_count(config.mask_rate, len(candidates))
    if k == 0:
        return replace(instance, mlm_positions=[], mlm_labels=[])
    positions = sorted(int(p) for p in rng.choice(np.asarray(candidates), size=k, replace=False))
    ids = list(instance.token_ids)
    labels = [ids[p] for p in positions]
    p_mask, p_rand, _ = config.replace_probs
    pool = vocab.replacement_ids
    for p in positions:
        u = rng.random()
        if u < p_mask:
            ids[p] = vocab.mask_id
        elif u < p_mask + p_rand:
            ids[p] = pool[int(rng.integers(len(pool)))]
    return replace(instance, token_ids=ids, mlm_positions=positions, mlm_labels=labels)


def word_boundaries(instance: TrainingInstance) -> list[int]:
    """Insertion points between whole words: before each word's first piece
    and before each [SEP]."""
    out = []
    wids = instance.word_ids
    for p in range(1, len(wids)):
        w = wids[p]
        if w < 0 or wids[p - 1] != w:
            out.append(p)
    return out


def insert_blank(instance: TrainingInstance, config: BuilderConfig, vocab: Vocabulary,
                 rng: np.random.Generator, report: BuildReport | None = None) -> TrainingInstance:
    """With probability ``blank_instance_prob`` insert one slot labeled
    [BLANK] at a random word boundary.

    The slot holds [MASK] (``blank_mode='mask'``) or a random whole-word
    token (``blank_mode='intruder'``).  Skipped if it would exceed max_len.
    """
    if config.blank_instance_prob <= 0 or rng.random() >= config.blank_instance_prob:
        return instance
    if len(instance) + 1 > config.max_len:
        if report is not None:
            report.blank_skipped += 1
        return instance
    spots = word_boundaries(instance)
    at = spots[int(rng.integers(len(spots)))]
    if config.blank_mode == "mask":
        filler = vocab.mask_id
    else:
        pool = vocab.word_initial_ids
        filler = pool[int(rng.integers(len(pool)))]
    ids = instance.token_ids[:at] + [filler] + instance.token_ids[at:]
    wids = instance.word_ids[:at] + [-1] + instance.word_ids[at:]
    positions = [p + (p >= at) for p in instance.mlm_positions]
    labels = list(instance.mlm_labels)
    k = sum(p < at for p in positions)
    positions.insert(k, at)
    labels.insert(k, vocab.blank_id)
    return replace(instance, token_ids=ids, word_ids=wids, mlm_positions=positions,
                   mlm_labels=labels, has_blank=True)


def original_ids(token_ids: Sequence[int], positions: Sequence[int], labels: Sequence[int],
                 blank_id: int) -> list[int]:
    """Undo masking: put labels back and remove the [BLANK] slot."""
    ids = list(token_ids)
    drop = set()
    for p, lab in zip(positions, labels):
        if lab == blank_id:
            drop.add(p)
        else:
            ids[p] = lab
    return [t for i, t in enumerate(ids) if i not in drop]


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------

def _check_vocab(vocab: Vocabulary) -> None:
    missing = [n for n, i in (("[CLS]", vocab.cls_id), ("[SEP]", vocab.sep_id), ("[MASK]", vocab.mask_id),
                              ("[BLANK]", vocab.blank_id), ("[UNK]", vocab.unk_id)) if i is None]
    if missing:
        raise ValueError(f"vocabulary lacks special tokens {missing}")


def build_document(doc: Document, doc_index: int, tokenizer: WordPieceTokenizer,
                   config: BuilderConfig) -> tuple[list[TrainingInstance], BuildReport]:
    """All instances of one document.  Randomness comes from a generator
    seeded by ``(seed, doc_index)`` so documents are independent."""
    vocab = tokenizer.vocab_
    report = BuildReport(documents=1)
    rng = np.random.default_rng([config.seed, doc_index])
    sents = [tokenizer.encode(s) for s in split_sentences(doc.text)]
    report.sentences += len(sents)
    out = []
    for inst in pack_instances(sents, config.max_len, vocab, doc.id, report):
        if not reject_unk(inst, vocab):
            report.dropped_unk += 1
            continue
        cands = select_mask_candidates(inst)
        report.candidate_positions += len(cands)
        if not cands:
            report.zero_candidate_instances += 1
        inst = apply_masking(inst, config, vocab, rng, cands)
        report.masked_positions += len(inst.mlm_positions)
        inst = insert_blank(inst, config, vocab, rng, report)
        report.blanks += inst.has_blank
        report.instances += 1
        out.append(inst)
    return out, report


def _parse(record) -> Document:
    if isinstance(record, Document):
        return record
    return Document.from_json(record)


def build(corpus: Iterable, tokenizer: WordPieceTokenizer | Vocabulary, config: BuilderConfig = BuilderConfig(),
          threads: int = 1, chunk_size: int = 64) -> tuple[Iterator[TrainingInstance], BuildReport]:
    """Turn a stream of documents (``Document`` objects, dicts or JSON lines)
    into training instances.

    Returns ``(instances, report)``; the report fills in as the iterator is
    consumed.  Output is identical for every ``threads`` value.
    """
    if isinstance(tokenizer, Vocabulary):
        tokenizer = WordPieceTokenizer(vocab=tokenizer).fit()
    _check_vocab(tokenizer.vocab_)
    report = BuildReport()

    def work(item):
        idx, doc = item
        return build_document(doc, idx, tokenizer, config)

    def run() -> Iterator[TrainingInstance]:
        pool = ThreadPoolExecutor(threads) if threads > 1 else None

        def flush(chunk):
            results = pool.map(work, chunk) if pool else map(work, chunk)
            for insts, rep in results:
                report.merge(rep)
                yield from insts

        try:
            chunk = []
            for idx, rec in enumerate(corpus):
                try:
                    chunk.append((idx, _parse(rec)))
                except (ValueError, TypeError):
                    report.parse_errors += 1
                    continue
                if len(chunk) >= chunk_size:
                    yield from flush(chunk)
                    chunk = []
            yield from flush(chunk)
        finally:
            if pool:
                pool.shutdown()

    return run(), report


class MLMInstanceBuilder(TransformerMixin, BaseEstimator):
    """Estimator face of :func:`build`.

    ``fit`` trains the tokenizer if it has no vocabulary yet; ``transform``
    returns the list of instances and stores the counters in ``report_``.
    """

    def __init__(self, tokenizer=None, max_len=512, mask_rate=0.15, replace_probs=(0.8, 0.1, 0.1),
                 blank_instance_prob=0.10, blank_mode="mask", seed=0, threads=1):
        self.tokenizer = tokenizer
        self.max_len = max_len
        self.mask_rate = mask_rate
        self.replace_probs = replace_probs
        self.blank_instance_prob = blank_instance_prob
        self.blank_mode = blank_mode
        self.seed = seed
        self.threads = threads

    def fit(self, X=None, y=None):
        tok = self.tokenizer if self.tokenizer is not None else WordPieceTokenizer()
        if isinstance(tok, Vocabulary):
            tok = WordPieceTokenizer(vocab=tok)
        if not hasattr(tok, "trie_"):
            texts = None if X is None else [d if isinstance(d, str) else _parse(d).text for d in X]
            tok = tok.fit(texts)
        self.tokenizer_ = tok
        self.config_ = BuilderConfig(self.max_len, self.mask_rate, tuple(self.replace_probs),
                                     self.blank_instance_prob, self.blank_mode, self.seed)
        return self

    def transform(self, X):
        if not hasattr(self, "tokenizer_"):
            raise ValueError("MLMInstanceBuilder is not fitted")
        docs = [Document(str(i), d) if isinstance(d, str) else d for i, d in enumerate(X)]
        it, self.report_ = build(docs, self.tokenizer_, self.config_, self.threads)
        return list(it)
