"""Tokenization and greedy longest-match dictionary lookup over token n-grams."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Generic, Iterable, Sequence, TypeVar

SEMANTIC_TYPES = frozenset(
    {
        "Disease",
        "Sign or Symptom",
        "Disease or Syndrome",
        "Acquired Abnormality",
        "Anatomical Abnormality",
        "Congenital Abnormality",
        "Injury or Poisoning",
        "Mental Process",
        "Mental or Behavioral Dysfunction",
        # treatment markers; needed so fluid resuscitation can be read from notes
        "Therapeutic or Preventive Procedure",
    }
)

MAX_NGRAM = 6

_TOKEN_RE = re.compile(r"[^\W_]+")
_BREAK_CHARS = frozenset(".;\n!?")


class Polarity(str, Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"


@dataclass(frozen=True)
class Token:
    text: str  # lowercased
    start: int
    end: int


def tokenize(text: str) -> list[Token]:
    """Split on whitespace and punctuation, keeping character offsets."""
    return [Token(m.group().lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def sentence_breaks(text: str, tokens: Sequence[Token]) -> list[bool]:
    """``breaks[i]`` is True when a sentence boundary separates token i and i+1.

    A lone ``.`` between two digit tokens (a decimal point) is not a boundary.
    """
    out = []
    for left, right in zip(tokens, tokens[1:]):
        gap = text[left.end : right.start]
        if gap == "." and left.text.isdigit() and right.text.isdigit():
            out.append(False)
        else:
            out.append(any(ch in _BREAK_CHARS for ch in gap))
    return out


def normalize_surface(term: str) -> str:
    """Lowercase and collapse internal whitespace."""
    return " ".join(term.lower().split())


def token_key(term: str) -> tuple[str, ...]:
    return tuple(t.text for t in tokenize(term))


T = TypeVar("T")


@dataclass(frozen=True)
class PhraseMatch(Generic[T]):
    token_start: int
    token_end: int  # exclusive
    payload: T


class PhraseIndex(Generic[T]):
    """Token-tuple lookup supporting greedy longest-match scans.

    When two phrases share a token tuple the first one added is kept.
    """

    def __init__(self, max_len: int = MAX_NGRAM):
        self.max_len = max_len
        self._table: dict[tuple[str, ...], T] = {}

    def add(self, phrase: str, payload: T) -> bool:
        key = token_key(phrase)
        if not key or len(key) > self.max_len or key in self._table:
            return False
        self._table[key] = payload
        return True

    def __len__(self) -> int:
        return len(self._table)

    def scan(
        self,
        tokens: Sequence[Token],
        breaks: Sequence[bool] | None = None,
        blocked: Sequence[bool] | None = None,
    ) -> list[PhraseMatch[T]]:
        n = len(tokens)
        words = [t.text for t in tokens]
        out: list[PhraseMatch[T]] = []
        i = 0
        while i < n:
            if blocked is not None and blocked[i]:
                i += 1
                continue
            hit = None
            for length in range(min(self.max_len, n - i), 0, -1):
                j = i + length
                if blocked is not None and any(blocked[i:j]):
                    continue
                if breaks is not None and any(breaks[i : j - 1]):
                    continue
                payload = self._table.get(tuple(words[i:j]))
                if payload is not None:
                    hit = PhraseMatch(i, j, payload)
                    break
            if hit is None:
                i += 1
            else:
                out.append(hit)
                i = hit.token_end
        return out


@dataclass(frozen=True)
class LexiconEntry:
    surface_term: str
    cui: str
    semantic_type: str
    preferred_name: str


def _read_concept_tsv(path_or_text, *, is_text: bool = False) -> list[LexiconEntry]:
    text = path_or_text if is_text else Path(path_or_text).read_text("utf-8")
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected 4 tab-separated fields, got {len(parts)}")
        surface, cui, stype, name = (p.strip() for p in parts)
        if stype not in SEMANTIC_TYPES:
            raise ValueError(f"line {lineno}: unknown semantic type {stype!r}")
        if not surface:
            raise ValueError(f"line {lineno}: empty surface term")
        entries.append(LexiconEntry(normalize_surface(surface), cui, stype, name))
    return entries


@dataclass
class ConceptLexicon:
    """Surface terms recognised in text. ``cui`` may be empty for variants
    that only the normalizer can resolve."""

    entries: list[LexiconEntry]
    index: PhraseIndex = field(init=False, repr=False)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.surface_term in seen:
                raise ValueError(f"duplicate surface term {e.surface_term!r}")
            seen.add(e.surface_term)
        self.index = PhraseIndex(MAX_NGRAM)
        for e in self.entries:
            self.index.add(e.surface_term, e)

    @classmethod
    def from_tsv(cls, path) -> "ConceptLexicon":
        return cls(_read_concept_tsv(path))

    @classmethod
    def from_text(cls, text: str) -> "ConceptLexicon":
        return cls(_read_concept_tsv(text, is_text=True))

    @classmethod
    def from_terms(cls, terms: Iterable[tuple[str, str, str, str]]) -> "ConceptLexicon":
        return cls([LexiconEntry(normalize_surface(s), c, t, n) for s, c, t, n in terms])


@dataclass(frozen=True)
class EntityMention:
    start: int
    end: int
    surface: str
    semantic_type: str
    token_start: int
    token_end: int
    polarity: Polarity = Polarity.POSITIVE
    cui: str | None = None


def extract_entities(text: str, lexicon: ConceptLexicon, tokens: Sequence[Token] | None = None) -> list[EntityMention]:
    """Greedy longest-match scan (n <= 6) of lexicon terms over the tokens of ``text``.

    Matches never cross a sentence boundary and never overlap.
    """
    tokens = tokenize(text) if tokens is None else tokens
    if not tokens:
        return []
    breaks = sentence_breaks(text, tokens)
    mentions = []
    for m in lexicon.index.scan(tokens, breaks=breaks):
        start, end = tokens[m.token_start].start, tokens[m.token_end - 1].end
        mentions.append(
            EntityMention(
                start=start,
                end=end,
                surface=text[start:end],
                semantic_type=m.payload.semantic_type,
                token_start=m.token_start,
                token_end=m.token_end,
            )
        )
    return mentions
