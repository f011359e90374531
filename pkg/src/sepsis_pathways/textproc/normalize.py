"""Mapping surface strings to concept identifiers (CUIs)."""

from __future__ import annotations

from typing import Iterable

from .levenshtein import levenshtein
from .matching import LexiconEntry, _read_concept_tsv, normalize_surface

DEFAULT_THRESHOLD = 0.2
LOCAL_PREFIX = "LOCAL:"


def local_identifier(surface: str) -> str:
    """Stable id for a surface no dictionary concept is close to."""
    return LOCAL_PREFIX + "_".join(surface.lower().split())


class ConceptDictionary:
    """Surface term -> CUI table with approximate fallback.

    Every preferred name is also registered as a surface of its CUI so that
    normalizing a preferred name always returns its own CUI.
    """

    def __init__(self, entries: Iterable[LexiconEntry], threshold: float = DEFAULT_THRESHOLD):
        if not 0.0 <= threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        self.threshold = threshold
        self.exact: dict[str, str] = {}
        self.preferred_names: dict[str, str] = {}
        self.semantic_types: dict[str, str] = {}
        entries = list(entries)
        for e in entries:
            if not e.cui:
                raise ValueError(f"dictionary surface {e.surface_term!r} has no CUI")
            self._register(e.surface_term, e.cui)
            self.preferred_names.setdefault(e.cui, e.preferred_name)
            self.semantic_types.setdefault(e.cui, e.semantic_type)
        for cui, name in self.preferred_names.items():
            self._register(normalize_surface(name), cui)
        self._surfaces = sorted(self.exact)
        self._cache: dict[str, str] = {}

    def _register(self, surface: str, cui: str) -> None:
        existing = self.exact.get(surface)
        if existing is not None and existing != cui:
            raise ValueError(f"surface {surface!r} maps to both {existing} and {cui}")
        self.exact[surface] = cui

    @classmethod
    def from_tsv(cls, path, threshold: float = DEFAULT_THRESHOLD) -> "ConceptDictionary":
        return cls(_read_concept_tsv(path), threshold)

    @classmethod
    def from_text(cls, text: str, threshold: float = DEFAULT_THRESHOLD) -> "ConceptDictionary":
        return cls(_read_concept_tsv(text, is_text=True), threshold)

    def preferred_name(self, cui: str) -> str:
        if cui in self.preferred_names:
            return self.preferred_names[cui]
        if cui.startswith(LOCAL_PREFIX):
            return cui[len(LOCAL_PREFIX) :].replace("_", " ")
        return cui

    def closest(self, surface: str) -> tuple[float, str | None]:
        """Smallest normalized distance to any surface term and its CUI.

        Ties on distance go to the lexicographically smallest CUI.
        """
        s = normalize_surface(surface)
        best_d, best_cui = float("inf"), None
        for term in self._surfaces:
            longest = max(len(s), len(term))
            if longest == 0:
                d = 0.0
            else:
                # |len difference| bounds the distance from below
                if abs(len(s) - len(term)) / longest > min(best_d, 1.0):
                    continue
                d = levenshtein(s, term) / longest
            cui = self.exact[term]
            if d < best_d or (d == best_d and best_cui is not None and cui < best_cui):
                best_d, best_cui = d, cui
        return best_d, best_cui

    def normalize(self, surface: str) -> str:
        """Exact match, else nearest term within the threshold, else a LOCAL id."""
        key = normalize_surface(surface)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        cui = self.exact.get(key)
        if cui is None:
            d, near = self.closest(key)
            cui = near if near is not None and d <= self.threshold else local_identifier(key)
        self._cache[key] = cui
        return cui


def normalize(surface: str, dictionary: ConceptDictionary) -> str:
    return dictionary.normalize(surface)
