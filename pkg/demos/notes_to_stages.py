"""
From note text to a stage series
================================

Three nursing notes of one patient are reduced to polarity-tagged concepts,
aligned on hospital days, gap-filled, and cut into stages.
"""

from datetime import date, datetime, timezone

from sepsis_pathways.corpus import ClinicalNote, NoteCategory
from sepsis_pathways.textproc import TextResources, annotate_text, process_note
from sepsis_pathways.timeline import build_stage_series, stage_bounds

res = TextResources.default()
names = res.dictionary.preferred_names

# mentions, negation and normalization on a single sentence
for m in annotate_text("The patient has shortness of breath but denies any chest pain", res):
    print(f"{m.surface!r:24} -> {m.polarity.value}")

# a misspelling still reaches its concept; an unknown phrase gets a LOCAL id
print(res.dictionary.normalize("hemorrage"), names[res.dictionary.normalize("hemorrage")])
print(res.dictionary.normalize("port site tenderness"))

anchor = date(2150, 3, 1)


def note(day, text):
    ts = datetime(2150, 3, day, 9, tzinfo=timezone.utc)
    return ClinicalNote("P1", f"P1-{day}", NoteCategory.NURSING, ts, text)


notes = [
    process_note(note(1, "Febrile, productive cough. Denies chest pain."), anchor, res),
    process_note(note(3, "Still febrile. Cough improving."), anchor, res),
    process_note(note(5, "No fever. Cough resolved."), anchor, res),
]

# LOS 7: stage 1 is days 1-2, then 3-day windows, then the discharge day
print(stage_bounds(7))
series = build_stage_series("P1", notes, 7, None)
for stage in series.stages:
    pos = [names.get(c, c) for c in stage.positives()]
    neg = [names.get(c, c) for c in stage.negatives()]
    print(f"stage {stage.index} days {stage.day_range}: +{pos} -{neg}")
