"""WordPiece vocabulary training and linear-time longest-match encoding.

Encoding uses a trie over the vocabulary augmented with failure links and
failure pops, so each word is tokenized in a single left-to-right pass
(LinMaxMatch).  Output is identical to the textbook greedy
longest-match-first algorithm, which is kept here as :func:`naive_encode_word`.
"""
from __future__ import annotations

import logging
from collections import Counter, defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .pretokenizer import NormalizedText, PreToken, normalize, pretokenize

logger = logging.getLogger(__name__)

CONT = "##"
PAD, UNK, CLS, SEP, MASK, BLANK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[BLANK]"
DEFAULT_SPECIALS = (PAD, UNK, CLS, SEP, MASK, BLANK)
MAX_WORD_LEN = 100


class Vocabulary:
    """Ordered token inventory; a token's id is its position."""

    def __init__(self, tokens: Iterable[str], specials: Sequence[str] = DEFAULT_SPECIALS):
        self.tokens: tuple[str, ...] = tuple(tokens)
        self.token_to_id: dict[str, int] = {}
        for i, tok in enumerate(self.tokens):
            if not tok or "\n" in tok:
                raise ValueError(f"invalid token at line {i}: {tok!r}")
            if tok in self.token_to_id:
                raise ValueError(f"duplicate token {tok!r}")
            self.token_to_id[tok] = i
        self.specials = tuple(s for s in specials if s in self.token_to_id)
        self._special_ids = frozenset(self.token_to_id[s] for s in self.specials)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"

    def id_of(self, token: str) -> int:
        return self.token_to_id[token]

    def special_id(self, token: str) -> int | None:
        return self.token_to_id.get(token) if token in self.specials else None

    pad_id = property(lambda self: self.special_id(PAD))
    unk_id = property(lambda self: self.special_id(UNK))
    cls_id = property(lambda self: self.special_id(CLS))
    sep_id = property(lambda self: self.special_id(SEP))
    mask_id = property(lambda self: self.special_id(MASK))
    blank_id = property(lambda self: self.special_id(BLANK))

    def is_special(self, token_id: int) -> bool:
        return token_id in self._special_ids

    def non_special_ids(self) -> list[int]:
        return [i for i in range(len(self.tokens)) if i not in self._special_ids]

    @cached_property
    def replacement_ids(self) -> tuple[int, ...]:
        return tuple(self.non_special_ids())

    @cached_property
    def word_initial_ids(self) -> tuple[int, ...]:
        return tuple(i for i in self.non_special_ids() if not self.tokens[i].startswith(CONT))

    def convert_ids(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, specials: Sequence[str] = DEFAULT_SPECIALS) -> "Vocabulary":
        raw = Path(path).read_text(encoding="utf-8")
        if raw and not raw.endswith("\n"):
            raise ValueError(f"{path}: vocabulary file must end with a newline")
        return cls(raw.splitlines(), specials)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

def _doc_text(doc) -> str:
    return doc if isinstance(doc, str) else doc.text


def count_words(corpus: Iterable, strict_abbreviations: bool = False) -> Counter:
    counts: Counter = Counter()
    for doc in corpus:
        counts.update(t.text for t in pretokenize(normalize(_doc_text(doc)), strict_abbreviations))
    return counts


def _split_word(word: str) -> list[str]:
    return [word[0]] + [CONT + c for c in word[1:]]


def train_vocab(
    corpus: Iterable,
    target_size: int = 128_000,
    specials: Sequence[str] = DEFAULT_SPECIALS,
    min_char_freq: int = 10,
    max_word_len: int = MAX_WORD_LEN,
    word_counts: Counter | None = None,
) -> Vocabulary:
    """Train a WordPiece vocabulary by iterative pair merging.

    Pieces start as single characters (``##``-prefixed when not word
    initial).  Each step merges the adjacent pair maximizing
    ``freq(pair) / (freq(left) * freq(right))``; ties go to the
    lexicographically smallest ``(left, right)``.  Characters seen fewer than
    ``min_char_freq`` times are left out of the alphabet, and words
    containing them take no part in merging.
    """
    counts = word_counts if word_counts is not None else count_words(corpus)
    if not counts:
        raise ValueError("empty training corpus")

    char_freq: Counter = Counter()
    for w, f in counts.items():
        for c in w:
            char_freq[c] += f
    rare = {c for c, f in char_freq.items() if f < min_char_freq}

    words: list[list[str]] = []
    freqs: list[int] = []
    # sorted so results do not depend on hash order
    for w in sorted(counts):
        if len(w) > max_word_len or any(c in rare for c in w):
            continue
        words.append(_split_word(w))
        freqs.append(counts[w])

    alphabet = sorted({p for pieces in words for p in pieces})
    base = list(dict.fromkeys(specials))
    if target_size < len(base) + len(alphabet):
        raise ValueError(
            f"target_size {target_size} is smaller than specials + alphabet "
            f"({len(base)} + {len(alphabet)})"
        )
    tokens = base + [a for a in alphabet if a not in base]
    known = set(tokens)

    piece_freq: Counter = Counter()
    pair_freq: Counter = Counter()
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for idx, (pieces, f) in enumerate(zip(words, freqs)):
        for p in pieces:
            piece_freq[p] += f
        for pair in zip(pieces, pieces[1:]):
            pair_freq[pair] += f
            where[pair].add(idx)

    while len(tokens) < target_size and pair_freq:
        best = min(
            pair_freq,
            key=lambda pr: (-pair_freq[pr] / (piece_freq[pr[0]] * piece_freq[pr[1]]), pr),
        )
        left, right = best
        merged = left + right[len(CONT):]
        for idx in sorted(where.pop(best, ())):
            pieces, f = words[idx], freqs[idx]
            for p in pieces:
                piece_freq[p] -= f
            for pair in zip(pieces, pieces[1:]):
                pair_freq[pair] -= f
                if pair_freq[pair] <= 0:
                    del pair_freq[pair]
                if pair != best:
                    where[pair].discard(idx)
            out: list[str] = []
            i = 0
            while i < len(pieces):
                if i + 1 < len(pieces) and pieces[i] == left and pieces[i + 1] == right:
                    out.append(merged)
                    i += 2
                else:
                    out.append(pieces[i])
                    i += 1
            words[idx] = out
            for p in out:
                piece_freq[p] += f
            for pair in zip(out, out[1:]):
                pair_freq[pair] += f
                where[pair].add(idx)
        pair_freq.pop(best, None)
        if merged not in known:
            known.add(merged)
            tokens.append(merged)

    logger.info("trained vocabulary of %d tokens (%d alphabet)", len(tokens), len(alphabet))
    return Vocabulary(tokens, specials)


# --------------------------------------------------------------------------
# matching
# --------------------------------------------------------------------------

ROOT = 0
CONT_ROOT = 1


class MatchTrie:
    """Vocabulary trie with failure links for linear-time MaxMatch.

    Node 0 roots the word-initial pieces, node 1 roots continuation pieces
    (their ``##`` prefix is stripped, so literal ``#`` in text never collides
    with the marker).  ``fail[v]`` is -1 for "no failure link".
    """

    def __init__(self, vocab: Vocabulary, max_word_len: int = MAX_WORD_LEN):
        self.vocab = vocab
        self.max_word_len = max_word_len
        self.unk_id = vocab.unk_id
        self.children: list[dict[str, int]] = [{}, {}]
        self.token: list[int] = [-1, -1]
        for tid, tok in enumerate(vocab.tokens):
            if vocab.is_special(tid):
                continue
            if tok.startswith(CONT):
                if len(tok) > len(CONT):
                    self._insert(CONT_ROOT, tok[len(CONT):], tid)
            else:
                self._insert(ROOT, tok, tid)
        self._link()

    def _insert(self, root: int, s: str, tid: int) -> None:
        node = root
        for ch in s:
            nxt = self.children[node].get(ch)
            if nxt is None:
                nxt = len(self.children)
                self.children.append({})
                self.token.append(-1)
                self.children[node][ch] = nxt
            node = nxt
        self.token[node] = tid

    def _link(self) -> None:
        n = len(self.children)
        self.fail = [-1] * n
        self.pops: list[tuple[int, ...]] = [()] * n
        queue = [ROOT, CONT_ROOT]
        head = 0
        while head < len(queue):
            u = queue[head]
            head += 1
            for ch, v in self.children[u].items():
                if self.token[v] >= 0:
                    self.fail[v] = CONT_ROOT
                    self.pops[v] = (self.token[v],)
                else:
                    z = self.fail[u]
                    extra: list[int] = []
                    while z >= 0 and ch not in self.children[z]:
                        extra.extend(self.pops[z])
                        z = self.fail[z]
                    if z >= 0:
                        self.fail[v] = self.children[z][ch]
                        self.pops[v] = self.pops[u] + tuple(extra)
                queue.append(v)

    def __len__(self) -> int:
        return len(self.children)

    def match(self, word: str) -> tuple[list[int], int]:
        """Return ``(ids, transitions)`` for one word.

        ``transitions`` counts goto plus failure moves and is exposed for
        linearity checks.
        """
        unk = [self.unk_id] if self.unk_id is not None else []
        if len(word) > self.max_word_len:
            return unk, 0
        children, fail, pops = self.children, self.fail, self.pops
        out: list[int] = []
        steps = 0
        u = ROOT
        for ch in word:
            while True:
                nxt = children[u].get(ch)
                if nxt is not None:
                    break
                f = fail[u]
                if f < 0:
                    return unk, steps
                out.extend(pops[u])
                u = f
                steps += 1
            u = nxt
            steps += 1
        while u != CONT_ROOT:
            f = fail[u]
            if f < 0:
                return unk, steps
            out.extend(pops[u])
            u = f
            steps += 1
        return out, steps


def build_trie(vocab: Vocabulary, max_word_len: int = MAX_WORD_LEN) -> MatchTrie:
    return MatchTrie(vocab, max_word_len)


def encode_word(trie: MatchTrie, word: str) -> list[int]:
    return trie.match(word)[0]


def naive_encode_word(vocab: Vocabulary, word: str, max_word_len: int = MAX_WORD_LEN) -> list[int]:
    """Greedy longest-match-first, quadratic; the reference behaviour."""
    unk = [vocab.unk_id] if vocab.unk_id is not None else []
    if len(word) > max_word_len:
        return unk
    ids = []
    start = 0
    while start < len(word):
        end = len(word)
        found = None
        while end > start:
            piece = word[start:end] if start == 0 else CONT + word[start:end]
            if start == 0 and piece.startswith(CONT):
                # "##..." entries are continuation pieces only
                end -= 1
                continue
            tid = vocab.token_to_id.get(piece)
            if tid is not None and not vocab.is_special(tid):
                found = tid
                break
            end -= 1
        if found is None:
            return unk
        ids.append(found)
        start = end
    return ids


# --------------------------------------------------------------------------
# text encoding
# --------------------------------------------------------------------------

@dataclass
class TokenizedText:
    """Ids for a text plus, per id, the pre-token it came from."""

    ids: list[int] = field(default_factory=list)
    word_index: list[int] = field(default_factory=list)
    is_first: list[bool] = field(default_factory=list)
    spans: list[tuple[int, int]] = field(default_factory=list)
    pretokens: list[PreToken] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def n_words(self) -> int:
        return len(self.pretokens)

    def first_piece_positions(self) -> list[int]:
        return [i for i, first in enumerate(self.is_first) if first]

    def piece_counts(self) -> list[int]:
        counts = [0] * len(self.pretokens)
        for w in self.word_index:
            counts[w] += 1
        return counts


def _piece_spans(vocab: Vocabulary, ids: list[int], span: tuple[int, int]) -> list[tuple[int, int]]:
    start, end = span
    if len(ids) == 1 or any(vocab.is_special(i) for i in ids):
        return [span] * len(ids)
    out = []
    pos = start
    for i in ids:
        tok = vocab.tokens[i]
        n = len(tok) - (len(CONT) if tok.startswith(CONT) and pos > start else 0)
        out.append((pos, pos + n))
        pos += n
    return out


def encode_pretokens(pretokens: Sequence[PreToken], vocab: Vocabulary, trie: MatchTrie, cache: dict | None = None) -> TokenizedText:
    out = TokenizedText(pretokens=list(pretokens))
    for w, pt in enumerate(pretokens):
        ids = cache.get(pt.text) if cache is not None else None
        if ids is None:
            ids = trie.match(pt.text)[0]
            if cache is not None:
                cache[pt.text] = ids
        out.ids.extend(ids)
        out.word_index.extend([w] * len(ids))
        out.is_first.extend(k == 0 for k in range(len(ids)))
        out.spans.extend(_piece_spans(vocab, ids, pt.span))
    return out


def encode(text: str | NormalizedText, vocab: Vocabulary, trie: MatchTrie | None = None,
           strict_abbreviations: bool = False) -> TokenizedText:
    """normalize -> pretokenize -> encode each pre-token.  No [CLS]/[SEP]."""
    trie = trie if trie is not None else build_trie(vocab)
    norm = text if isinstance(text, NormalizedText) else normalize(text)
    return encode_pretokens(pretokenize(norm, strict_abbreviations), vocab, trie)


def decode_words(vocab: Vocabulary, ids: Sequence[int]) -> list[str]:
    """Glue ``##`` pieces back onto their word; specials become their own word."""
    words: list[str] = []
    for i in ids:
        tok = vocab.tokens[i]
        if tok.startswith(CONT) and len(tok) > len(CONT) and words and not vocab.is_special(i):
            words[-1] += tok[len(CONT):]
        else:
            words.append(tok)
    return words


class WordPieceTokenizer(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` trains a vocabulary from raw texts,
    ``transform`` maps texts to :class:`TokenizedText`.

    Parameters
    ----------
    vocab_size : int
        Target vocabulary size including specials.
    min_char_freq : int
        Characters rarer than this are left to [UNK].
    max_word_len : int
        Longer pre-tokens encode to [UNK].
    strict_abbreviations : bool
        Keep a word-internal double quote only before the final letter.
    vocab : Vocabulary or str, optional
        A fixed vocabulary (or path to one); ``fit`` then only builds the trie.
    """

    def __init__(self, vocab_size=128_000, min_char_freq=10, max_word_len=MAX_WORD_LEN,
                 strict_abbreviations=False, vocab=None):
        self.vocab_size = vocab_size
        self.min_char_freq = min_char_freq
        self.max_word_len = max_word_len
        self.strict_abbreviations = strict_abbreviations
        self.vocab = vocab

    def fit(self, X=None, y=None):
        if self.vocab is not None:
            vocab = self.vocab if isinstance(self.vocab, Vocabulary) else Vocabulary.load(self.vocab)
        else:
            if X is None:
                raise ValueError("no vocabulary given and no corpus to train on")
            counts = count_words(X, self.strict_abbreviations)
            vocab = train_vocab(None, self.vocab_size, min_char_freq=self.min_char_freq,
                                max_word_len=self.max_word_len, word_counts=counts)
        self.vocab_ = vocab
        self.trie_ = build_trie(vocab, self.max_word_len)
        self._cache: dict[str, list[int]] = {}
        return self

    def encode(self, text) -> TokenizedText:
        check_is_fitted(self, "trie_")
        norm = text if isinstance(text, NormalizedText) else normalize(_doc_text(text))
        pts = pretokenize(norm, self.strict_abbreviations)
        if len(self._cache) > 1_000_000:
            self._cache.clear()
        return encode_pretokens(pts, self.vocab_, self.trie_, self._cache)

    def transform(self, X):
        return [self.encode(x) for x in X]

    def __sklearn_is_fitted__(self):
        return hasattr(self, "trie_")
