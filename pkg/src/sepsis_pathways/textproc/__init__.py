"""Clinical text to polarity-tagged concept identifiers."""

from .levenshtein import levenshtein, normalized_levenshtein
from .matching import (
    SEMANTIC_TYPES,
    ConceptLexicon,
    EntityMention,
    LexiconEntry,
    Polarity,
    Token,
    extract_entities,
    tokenize,
)
from .negex import NegationTrigger, NegationTriggerSet, TriggerRole, detect_negations
from .normalize import ConceptDictionary, local_identifier, normalize
from .notes import (
    StructuredNote,
    TextResources,
    annotate_text,
    load_annotations,
    mentions_from_annotations,
    process_note,
    resolve_polarities,
)

__all__ = [
    "SEMANTIC_TYPES",
    "ConceptDictionary",
    "ConceptLexicon",
    "EntityMention",
    "LexiconEntry",
    "NegationTrigger",
    "NegationTriggerSet",
    "Polarity",
    "StructuredNote",
    "TextResources",
    "Token",
    "TriggerRole",
    "annotate_text",
    "detect_negations",
    "extract_entities",
    "levenshtein",
    "load_annotations",
    "local_identifier",
    "mentions_from_annotations",
    "normalize",
    "normalized_levenshtein",
    "process_note",
    "resolve_polarities",
    "tokenize",
]
