"""Note-level composition: extract, negate, normalize, deduplicate."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from datetime import date
from importlib import resources
from typing import Iterable, Mapping, Sequence

from ..corpus import ClinicalNote, day_index
from .matching import (
    SEMANTIC_TYPES,
    ConceptLexicon,
    EntityMention,
    Polarity,
    extract_entities,
    tokenize,
)
from .negex import DEFAULT_WINDOW, NegationTriggerSet, detect_negations
from .normalize import DEFAULT_THRESHOLD, ConceptDictionary


@dataclass(frozen=True)
class StructuredNote:
    patient_id: str
    note_id: str
    day_index: int
    concepts: frozenset  # of (cui, Polarity)

    def to_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "note_id": self.note_id,
            "day_index": self.day_index,
            "concepts": [[c, p.value] for c, p in sorted(self.concepts, key=lambda x: (x[0], x[1].value))],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "StructuredNote":
        return cls(
            str(d["patient_id"]),
            str(d["note_id"]),
            int(d["day_index"]),
            frozenset((c, Polarity(p)) for c, p in d["concepts"]),
        )


@dataclass
class TextResources:
    lexicon: ConceptLexicon
    triggers: NegationTriggerSet
    dictionary: ConceptDictionary
    window: int = DEFAULT_WINDOW

    @classmethod
    def default(cls, threshold: float = DEFAULT_THRESHOLD, window: int = DEFAULT_WINDOW) -> "TextResources":
        pkg = resources.files("sepsis_pathways.resources")
        return cls(
            ConceptLexicon.from_text(pkg.joinpath("lexicon.tsv").read_text("utf-8")),
            NegationTriggerSet.from_text(pkg.joinpath("negation_triggers.tsv").read_text("utf-8")),
            ConceptDictionary.from_text(pkg.joinpath("concept_dictionary.tsv").read_text("utf-8"), threshold),
            window,
        )

    @classmethod
    def from_paths(cls, lexicon, triggers, dictionary, threshold=DEFAULT_THRESHOLD, window=DEFAULT_WINDOW):
        return cls(
            ConceptLexicon.from_tsv(lexicon),
            NegationTriggerSet.from_tsv(triggers),
            ConceptDictionary.from_tsv(dictionary, threshold),
            window,
        )


def resolve_polarities(pairs: Iterable[tuple[str, Polarity]]) -> frozenset:
    """Collapse to one polarity per CUI; Positive wins over Negative."""
    best: dict[str, Polarity] = {}
    for cui, pol in pairs:
        if best.get(cui) is not Polarity.POSITIVE:
            best[cui] = pol
    return frozenset(best.items())


def annotate_text(
    text: str, res: TextResources, mentions: Sequence[EntityMention] | None = None
) -> list[EntityMention]:
    """Mentions of ``text`` with polarity and CUI filled in."""
    tokens = tokenize(text)
    if mentions is None:
        mentions = extract_entities(text, res.lexicon, tokens)
    mentions = detect_negations(text, mentions, res.triggers, res.window, tokens)
    return [replace(m, cui=res.dictionary.normalize(m.surface)) for m in mentions]


def process_note(
    note: ClinicalNote,
    anchor: date,
    res: TextResources,
    mentions: Sequence[EntityMention] | None = None,
) -> StructuredNote:
    """Reduce one note to its set of (CUI, polarity) pairs.

    Args:
        note: the clinical note.
        anchor: the patient's admission date (day 1).
        res: lexicon, triggers and dictionary.
        mentions: pre-computed spans from an external annotator; when given,
            the lexicon matcher is skipped.
    """
    annotated = annotate_text(note.text, res, mentions)
    concepts = resolve_polarities((m.cui, m.polarity) for m in annotated)
    return StructuredNote(note.patient_id, note.note_id, day_index(note.chart_time, anchor), concepts)


def mentions_from_annotations(text: str, spans: Sequence[Mapping]) -> list[EntityMention]:
    """Turn external ``{start, end, surface, semantic_type}`` spans into mentions.

    Spans must be in-bounds, non-overlapping and cover at least one token.
    """
    tokens = tokenize(text)
    out = []
    last_end = -1
    for span in sorted(spans, key=lambda s: (int(s["start"]), int(s["end"]))):
        start, end = int(span["start"]), int(span["end"])
        if not 0 <= start < end <= len(text):
            raise ValueError(f"span [{start}, {end}) out of bounds")
        if start < last_end:
            raise ValueError(f"span [{start}, {end}) overlaps the previous span")
        stype = span.get("semantic_type", "Sign or Symptom")
        if stype not in SEMANTIC_TYPES:
            raise ValueError(f"unknown semantic type {stype!r}")
        covered = [i for i, t in enumerate(tokens) if t.start < end and t.end > start]
        if not covered:
            raise ValueError(f"span [{start}, {end}) covers no token")
        out.append(
            EntityMention(
                start=start,
                end=end,
                surface=span.get("surface") or text[start:end],
                semantic_type=stype,
                token_start=covered[0],
                token_end=covered[-1] + 1,
            )
        )
        last_end = end
    return out


def load_annotations(path) -> dict[str, list[dict]]:
    """``annotations.jsonl``: ``{"note_id": ..., "mentions": [...]}`` per line."""
    out: dict[str, list[dict]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "note_id" not in obj or not isinstance(obj.get("mentions"), list):
                raise ValueError(f"{path}:{lineno}: expected note_id and a mentions list")
            out[str(obj["note_id"])] = obj["mentions"]
    return out
