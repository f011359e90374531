"""NegEx-style negation scoping over token windows."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

from .matching import EntityMention, PhraseIndex, Polarity, Token, sentence_breaks, tokenize

DEFAULT_WINDOW = 6


class TriggerRole(str, Enum):
    PRE = "pre_negation"
    POST = "post_negation"
    PSEUDO = "pseudo_negation"
    TERMINATION = "termination"


@dataclass(frozen=True)
class NegationTrigger:
    phrase: str
    role: TriggerRole


class NegationTriggerSet:
    def __init__(self, entries: Sequence[NegationTrigger]):
        phrases = set()
        for e in entries:
            if e.phrase != e.phrase.lower():
                raise ValueError(f"trigger {e.phrase!r} is not lowercase")
            if e.phrase in phrases:
                raise ValueError(f"duplicate trigger {e.phrase!r}")
            phrases.add(e.phrase)
        self.entries = list(entries)
        self.index: PhraseIndex[NegationTrigger] = PhraseIndex(max_len=8)
        for e in self.entries:
            self.index.add(e.phrase, e)

    @classmethod
    def from_text(cls, text: str) -> "NegationTriggerSet":
        entries = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected phrase<TAB>role")
            phrase, role = parts[0].strip(), parts[1].strip()
            entries.append(NegationTrigger(" ".join(phrase.split()), TriggerRole(role)))
        return cls(entries)

    @classmethod
    def from_tsv(cls, path) -> "NegationTriggerSet":
        return cls.from_text(Path(path).read_text("utf-8"))


def detect_negations(
    text: str,
    mentions: Sequence[EntityMention],
    triggers: NegationTriggerSet,
    window: int = DEFAULT_WINDOW,
    tokens: Sequence[Token] | None = None,
) -> list[EntityMention]:
    """Set the polarity of each mention; spans and order are left untouched.

    A mention is negated when a pre-negation trigger ends within ``window``
    tokens before it, or a post-negation trigger starts within ``window``
    tokens after it. Scope stops at termination phrases, sentence
    boundaries and other mentions. Pseudo-negations are consumed so that
    their inner words cannot fire, but never negate anything themselves.
    """
    tokens = tokenize(text) if tokens is None else tokens
    n = len(tokens)
    if not mentions:
        return []
    breaks = sentence_breaks(text, tokens)
    owner = [-1] * n
    for k, m in enumerate(mentions):
        for t in range(m.token_start, m.token_end):
            owner[t] = k
    blocked = [o >= 0 for o in owner]

    ends_at: dict[int, TriggerRole] = {}
    starts_at: dict[int, TriggerRole] = {}
    for hit in triggers.index.scan(tokens, breaks=breaks, blocked=blocked):
        ends_at[hit.token_end - 1] = hit.payload.role
        starts_at[hit.token_start] = hit.payload.role

    out = []
    for k, m in enumerate(mentions):
        negated = False
        # backwards from the token before the mention
        j = m.token_start - 1
        while j >= 0 and j >= m.token_start - window:
            if breaks[j]:
                break
            if owner[j] >= 0:
                break
            role = ends_at.get(j)
            if role is TriggerRole.TERMINATION:
                break
            if role is TriggerRole.PRE:
                negated = True
                break
            j -= 1
        if not negated:
            j = m.token_end
            while j < n and j < m.token_end + window:
                if breaks[j - 1]:
                    break
                if owner[j] >= 0:
                    break
                role = starts_at.get(j)
                if role is TriggerRole.TERMINATION:
                    break
                if role is TriggerRole.POST:
                    negated = True
                    break
                j += 1
        polarity = Polarity.NEGATIVE if negated else Polarity.POSITIVE
        out.append(replace(m, polarity=polarity))
    return out
