"""Hebrew-aware normalization and pre-tokenization.

Word-internal gershayim (abbreviations such as צה"ל) and geresh after a
Hebrew letter (loanwords such as ג'ירפה, or single-letter abbreviations)
stay inside their word; all other punctuation is split off.
"""
from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from enum import Enum

GERSHAYIM = "״"
GERESH = "׳"

_HEB_FIRST = 0x05D0
_HEB_LAST = 0x05EA


def is_hebrew_letter(ch: str) -> bool:
    return _HEB_FIRST <= ord(ch) <= _HEB_LAST


class TokenKind(str, Enum):
    WORD = "Word"
    PUNCT = "Punct"
    NUMBER = "Number"


@dataclass(frozen=True)
class PreToken:
    text: str
    span: tuple[int, int]
    kind: TokenKind


@dataclass(frozen=True)
class NormalizedText:
    """Normalized string plus, for each of its characters, the index of the
    raw-input character it came from."""

    text: str
    mapping: tuple[int, ...]

    def raw_span(self, span: tuple[int, int], raw_len: int | None = None) -> tuple[int, int]:
        start, end = span
        raw_start = self.mapping[start]
        if end < len(self.mapping):
            raw_end = self.mapping[end]
        else:
            raw_end = raw_len if raw_len is not None else self.mapping[-1] + 1
        return raw_start, raw_end


def _map_char(ch: str) -> str:
    if ch == GERSHAYIM:
        return '"'
    if ch == GERESH:
        return "'"
    if unicodedata.category(ch) == "Cc":
        return " "
    return ch


def _composes(prev: str, ch: str) -> bool:
    return unicodedata.normalize("NFC", prev + ch) != unicodedata.normalize("NFC", prev) + ch


def normalize(raw: str) -> NormalizedText:
    """NFC-compose ``raw``, unify Hebrew gershayim/geresh with their ASCII
    look-alikes and turn control characters into spaces.

    Composition is done per combining sequence so every output character can
    be traced back to the raw character that starts its sequence.
    """
    if unicodedata.is_normalized("NFC", raw):
        text = "".join(_map_char(ch) for ch in raw)
        return NormalizedText(text, tuple(range(len(raw))))

    # split into chunks that NFC cannot merge across
    chunks: list[list] = []
    for i, ch in enumerate(raw):
        if chunks and (unicodedata.combining(ch) or _composes(chunks[-1][1], ch)):
            chunks[-1][1] += ch
        else:
            chunks.append([i, ch])

    out: list[str] = []
    mapping: list[int] = []
    for start, chunk in chunks:
        for ch in unicodedata.normalize("NFC", chunk):
            out.append(_map_char(ch))
            mapping.append(start)
    return NormalizedText("".join(out), tuple(mapping))


def _is_wordish(ch: str) -> bool:
    cat = unicodedata.category(ch)
    return cat[0] in "LM" or cat == "Nd"


def _abbrev_quote(text: str, i: int, strict: bool) -> bool:
    """Does the double quote at ``text[i]`` sit inside a Hebrew abbreviation?"""
    n = len(text)
    if i == 0 or i + 1 >= n:
        return False
    if not (is_hebrew_letter(text[i - 1]) and is_hebrew_letter(text[i + 1])):
        return False
    if strict:
        # exactly one letter (plus diacritics) after the quote
        j = i + 2
        while j < n and unicodedata.category(text[j])[0] == "M":
            j += 1
        return j >= n or not _is_wordish(text[j])
    return True


def pretokenize(text: NormalizedText | str, strict_abbreviations: bool = False) -> list[PreToken]:
    """Split normalized text into Word, Number and single-character Punct
    pre-tokens.

    With ``strict_abbreviations`` a word-internal double quote is kept only
    when it precedes the final letter of the word.
    """
    s = text.text if isinstance(text, NormalizedText) else text
    n = len(s)
    tokens: list[PreToken] = []
    i = 0
    while i < n:
        ch = s[i]
        if ch.isspace():
            i += 1
            continue
        start = i
        cat = unicodedata.category(ch)
        if cat == "Nd":
            i += 1
            while i < n:
                c = s[i]
                if unicodedata.category(c) == "Nd":
                    i += 1
                elif c in ".," and i + 1 < n and unicodedata.category(s[i + 1]) == "Nd":
                    i += 2
                else:
                    break
            tokens.append(PreToken(s[start:i], (start, i), TokenKind.NUMBER))
        elif cat[0] == "L":
            i += 1
            while i < n:
                c = s[i]
                if _is_wordish(c):
                    i += 1
                elif c == '"' and _abbrev_quote(s, i, strict_abbreviations):
                    i += 1
                elif c == "'" and is_hebrew_letter(s[i - 1]):
                    i += 1
                else:
                    break
            tokens.append(PreToken(s[start:i], (start, i), TokenKind.WORD))
        elif cat[0] == "M" and tokens and tokens[-1].span[1] == i:
            # stray combining mark glued to the previous token
            prev = tokens.pop()
            tokens.append(PreToken(prev.text + ch, (prev.span[0], i + 1), prev.kind))
            i += 1
        else:
            i += 1
            tokens.append(PreToken(ch, (start, i), TokenKind.PUNCT))
    return tokens


def pretokenize_text(raw: str, strict_abbreviations: bool = False) -> list[PreToken]:
    """Normalize then pre-tokenize; spans refer to the normalized text."""
    return pretokenize(normalize(raw), strict_abbreviations)
