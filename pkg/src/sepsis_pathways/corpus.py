"""Ingestion of notes, vitals and demographics plus discharge dispositions.

Input formats
-------------
notes.jsonl
    ``{"patient_id", "note_id", "category", "chart_time", "text"}`` per line.
vitals.csv
    header ``patient_id,chart_time,item,value``.
demographics.jsonl
    ``{"patient_id", "sex": "M"|"F", "age_years": int}`` per line.

Loaders never stop at a bad row; every rejected row becomes a :class:`Rejection`
which can be written out with :func:`write_rejects`.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, datetime, timezone
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from ._io import write_csv

logger = logging.getLogger(__name__)


class NoteCategory(str, Enum):
    NURSING = "nursing"
    RADIOLOGY = "radiology"
    ECG = "ecg"
    DISCHARGE_SUMMARY = "discharge_summary"


class DispositionStatus(str, Enum):
    DECEASE = "Decease"
    DISCHARGE = "Discharge"


# item -> inclusive plausible range
VITAL_RANGES: dict[str, tuple[float, float]] = {
    "temp_c": (25.0, 45.0),
    "heart_rate": (0.0, 300.0),
    "resp_rate": (0.0, 80.0),
    "wbc": (0.0, 200.0),
    "systolic_bp": (0.0, 300.0),
    "mean_arterial_pressure": (0.0, 300.0),
}


class NoRecordsError(ValueError):
    """Raised when an input file yields zero valid records."""


@dataclass(frozen=True)
class ClinicalNote:
    patient_id: str
    note_id: str
    category: NoteCategory
    chart_time: datetime
    text: str


@dataclass(frozen=True)
class VitalsRecord:
    patient_id: str
    chart_time: datetime
    item: str
    value: float


@dataclass(frozen=True)
class Disposition:
    patient_id: str
    status: DispositionStatus
    discharge_day: int


@dataclass(frozen=True)
class Demographics:
    patient_id: str
    sex: str | None = None
    age_years: int | None = None


@dataclass(frozen=True)
class Rejection:
    source: str
    line: int
    reason: str


@dataclass(frozen=True)
class PatientInfo:
    """Per-patient facts needed for :func:`cohort_stats`."""

    patient_id: str
    sex: str | None
    age_years: int | None
    los_days: int | None


@dataclass(frozen=True)
class CohortSummary:
    n_patients: int
    pct_male: float
    pct_female: float
    age_bands: dict[str, float]
    mean_length_of_stay_days: float

    def to_dict(self) -> dict:
        return {
            "n_patients": self.n_patients,
            "pct_male": self.pct_male,
            "pct_female": self.pct_female,
            "age_bands": dict(self.age_bands),
            "mean_length_of_stay_days": self.mean_length_of_stay_days,
        }


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 timestamp into an aware UTC datetime.

    Naive timestamps are taken to be UTC already.
    """
    if not isinstance(value, str):
        raise ValueError(f"timestamp must be a string, got {type(value).__name__}")
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _note_from_obj(obj) -> ClinicalNote:
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    for key in ("patient_id", "note_id", "category", "chart_time", "text"):
        if key not in obj:
            raise ValueError(f"missing key {key!r}")
    try:
        category = NoteCategory(obj["category"])
    except ValueError:
        raise ValueError(f"unknown category {obj['category']!r}") from None
    text = obj["text"]
    if not isinstance(text, str) or not text.strip():
        raise ValueError("empty text")
    return ClinicalNote(
        patient_id=str(obj["patient_id"]),
        note_id=str(obj["note_id"]),
        category=category,
        chart_time=parse_timestamp(obj["chart_time"]),
        text=text,
    )


def load_notes(path) -> tuple[dict[str, list[ClinicalNote]], list[Rejection]]:
    """Load ``notes.jsonl`` grouped by patient.

    Returns:
        ``(notes_by_patient, rejections)``; each patient's notes are sorted by
        ``(chart_time, note_id)`` and patients appear in sorted id order.

    Raises:
        NoRecordsError: if no line in the file is a valid note.
    """
    rejects: list[Rejection] = []
    grouped: dict[str, list[ClinicalNote]] = defaultdict(list)
    source = Path(path).name
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                note = _note_from_obj(json.loads(line))
            except (ValueError, TypeError) as exc:
                rejects.append(Rejection(source, lineno, str(exc)))
                logger.info("%s:%d rejected: %s", source, lineno, exc)
                continue
            grouped[note.patient_id].append(note)
    if not grouped:
        raise NoRecordsError(f"{path}: no records")
    if rejects:
        logger.warning("%s: %d line(s) rejected", source, len(rejects))
    out = {}
    for pid in sorted(grouped):
        out[pid] = sorted(grouped[pid], key=lambda n: (n.chart_time, n.note_id))
    return out, rejects


def validate_vital(item: str, value: float) -> str | None:
    """Return a rejection reason for a vitals value, or None when acceptable."""
    if item not in VITAL_RANGES:
        return f"unknown item {item!r}"
    if not math.isfinite(value):
        return "non-finite value"
    lo, hi = VITAL_RANGES[item]
    if not lo <= value <= hi:
        return "out of range"
    return None


def load_vitals(path) -> tuple[dict[str, list[VitalsRecord]], list[Rejection]]:
    """Load ``vitals.csv``; rows failing validation are rejected and logged."""
    rejects: list[Rejection] = []
    grouped: dict[str, list[VitalsRecord]] = defaultdict(list)
    source = Path(path).name
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["patient_id", "chart_time", "item", "value"]
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != expected:
            raise ValueError(f"{path}: header must be {','.join(expected)}")
        for row in reader:
            lineno = reader.line_num
            try:
                value = float(row["value"])
                ts = parse_timestamp(row["chart_time"])
            except (TypeError, ValueError) as exc:
                rejects.append(Rejection(source, lineno, f"unparseable row: {exc}"))
                logger.info("%s:%d rejected: unparseable row", source, lineno)
                continue
            item = (row["item"] or "").strip()
            reason = validate_vital(item, value)
            if reason is not None:
                rejects.append(Rejection(source, lineno, reason))
                logger.info("%s:%d rejected: %s", source, lineno, reason)
                continue
            pid = str(row["patient_id"]).strip()
            grouped[pid].append(VitalsRecord(pid, ts, item, value))
    if rejects:
        logger.warning("%s: %d row(s) rejected", source, len(rejects))
    out = {}
    for pid in sorted(grouped):
        out[pid] = sorted(grouped[pid], key=lambda r: (r.chart_time, r.item, r.value))
    return out, rejects


def load_demographics(path) -> tuple[dict[str, Demographics], list[Rejection]]:
    rejects: list[Rejection] = []
    out: dict[str, Demographics] = {}
    source = Path(path).name
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                pid = str(obj["patient_id"])
                sex = obj.get("sex")
                if sex is not None and sex not in ("M", "F"):
                    raise ValueError(f"bad sex {sex!r}")
                age = obj.get("age_years")
                if age is not None:
                    if isinstance(age, bool) or not isinstance(age, int) or age < 0:
                        raise ValueError(f"bad age {age!r}")
            except (ValueError, KeyError, TypeError) as exc:
                rejects.append(Rejection(source, lineno, str(exc)))
                continue
            out[pid] = Demographics(pid, sex, age)
    return out, rejects


def write_rejects(path, rejects: Iterable[Rejection]) -> None:
    write_csv(path, ["source", "line", "reason"], ((r.source, r.line, r.reason) for r in rejects))


def admission_anchor(
    notes: Sequence[ClinicalNote] = (), vitals: Sequence[VitalsRecord] = ()
) -> date:
    """Calendar date (UTC) of the earliest note or vitals event: day 1."""
    times = [n.chart_time for n in notes] + [v.chart_time for v in vitals]
    if not times:
        raise ValueError("patient has no events")
    return min(times).date()


def day_index(ts: datetime, anchor: date) -> int:
    """1-based hospital day of ``ts`` relative to the admission anchor."""
    return (ts.astimezone(timezone.utc).date() - anchor).days + 1


def default_decease_patterns() -> list[str]:
    text = resources.files("sepsis_pathways.resources").joinpath("decease_patterns.txt").read_text("utf-8")
    return parse_pattern_list(text)


def load_decease_patterns(path) -> list[str]:
    return parse_pattern_list(Path(path).read_text("utf-8"))


def parse_pattern_list(text: str) -> list[str]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line.lower())
    return out


def _pattern_regex(patterns: Sequence[str]) -> re.Pattern:
    alts = [r"\s+".join(re.escape(w) for w in p.split()) for p in patterns]
    return re.compile(r"\b(?:" + "|".join(alts) + r")\b", re.IGNORECASE)


def is_decease_text(text: str, patterns: Sequence[str] | None = None) -> bool:
    """Whole-word, case-insensitive match of any decease pattern."""
    patterns = default_decease_patterns() if patterns is None else patterns
    if not patterns:
        return False
    return _pattern_regex(patterns).search(text) is not None


def extract_disposition(
    note: ClinicalNote, anchor: date, patterns: Sequence[str] | None = None
) -> Disposition:
    """Read the final status from a discharge summary.

    Args:
        note: a ``discharge_summary`` note.
        anchor: the patient's admission anchor (day 1).
        patterns: decease phrases; defaults to the packaged list.
    """
    if note.category is not NoteCategory.DISCHARGE_SUMMARY:
        raise ValueError(f"note {note.note_id} is not a discharge summary")
    status = DispositionStatus.DECEASE if is_decease_text(note.text, patterns) else DispositionStatus.DISCHARGE
    return Disposition(note.patient_id, status, day_index(note.chart_time, anchor))


def find_disposition(
    notes: Sequence[ClinicalNote], anchor: date, patterns: Sequence[str] | None = None
) -> Disposition | None:
    """Disposition from the latest discharge summary, or None when there is none."""
    summaries = [n for n in notes if n.category is NoteCategory.DISCHARGE_SUMMARY]
    if not summaries:
        return None
    return extract_disposition(summaries[-1], anchor, patterns)


def note_day_coverage(notes: Sequence[ClinicalNote], anchor: date, los: int) -> float:
    """Fraction of days 1..los carrying at least one non-summary note."""
    if los < 1:
        return 0.0
    days = {
        day_index(n.chart_time, anchor)
        for n in notes
        if n.category is not NoteCategory.DISCHARGE_SUMMARY
    }
    return sum(1 for d in days if 1 <= d <= los) / los


AGE_BANDS = ("<18", "18-40", "41-60", "61-80", ">80")


def _age_band(age: int) -> str:
    if age < 18:
        return "<18"
    if age <= 40:
        return "18-40"
    if age <= 60:
        return "41-60"
    if age <= 80:
        return "61-80"
    return ">80"


def cohort_stats(patients: Sequence[PatientInfo]) -> CohortSummary:
    """Summary percentages, each taken over patients with a known value."""
    if not patients:
        raise ValueError("cohort is empty")
    sexes = [p.sex for p in patients if p.sex in ("M", "F")]
    n_sex = len(sexes)
    pct_male = 100.0 * sexes.count("M") / n_sex if n_sex else 0.0
    pct_female = 100.0 * sexes.count("F") / n_sex if n_sex else 0.0
    ages = [p.age_years for p in patients if p.age_years is not None]
    bands = {b: 0.0 for b in AGE_BANDS}
    for a in ages:
        bands[_age_band(a)] += 1
    if ages:
        bands = {b: 100.0 * c / len(ages) for b, c in bands.items()}
    stays = [p.los_days for p in patients if p.los_days is not None]
    mean_los = sum(stays) / len(stays) if stays else float("nan")
    return CohortSummary(len(patients), pct_male, pct_female, bands, mean_los)
