"""Hospital-day alignment, missing-day imputation and stage segmentation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpus import Disposition, DispositionStatus
from .textproc.matching import Polarity
from .textproc.notes import StructuredNote

POS = Polarity.POSITIVE
NEG = Polarity.NEGATIVE


class ShortStayError(ValueError):
    """Stay too short to segment (length of stay below two days)."""


@dataclass
class DailyConditionMap:
    patient_id: str
    days: list[dict[str, Polarity]]  # days[d - 1] is hospital day d

    @property
    def los(self) -> int:
        return len(self.days)

    def cuis(self) -> list[str]:
        return sorted({c for day in self.days for c in day})


@dataclass
class Stage:
    index: int
    first_day: int
    last_day: int
    conditions: dict[str, Polarity] = field(default_factory=dict)

    @property
    def day_range(self) -> tuple[int, int]:
        return (self.first_day, self.last_day)

    def positives(self) -> list[str]:
        return sorted(c for c, p in self.conditions.items() if p is POS)

    def negatives(self) -> list[str]:
        return sorted(c for c, p in self.conditions.items() if p is NEG)


@dataclass
class StageSeries:
    patient_id: str
    stages: list[Stage]
    disposition: Disposition | None
    los: int

    def to_records(self) -> list[dict]:
        return [
            {
                "patient_id": self.patient_id,
                "stage": s.index,
                "day_range": [s.first_day, s.last_day],
                "positives": s.positives(),
                "negatives": s.negatives(),
            }
            for s in self.stages
        ]


def _merge(target: dict[str, Polarity], cui: str, pol: Polarity) -> None:
    if target.get(cui) is not POS:
        target[cui] = pol


def align_days(patient_id: str, notes: Iterable[StructuredNote], los: int) -> DailyConditionMap:
    """Union per day with Positive-wins; notes outside 1..los are ignored."""
    days: list[dict[str, Polarity]] = [dict() for _ in range(los)]
    for note in notes:
        if 1 <= note.day_index <= los:
            bucket = days[note.day_index - 1]
            for cui, pol in note.concepts:
                _merge(bucket, cui, pol)
    return DailyConditionMap(patient_id, days)


def impute_series(series: Sequence[Polarity | None]) -> list[Polarity | None]:
    """Fill one concept's per-day polarities (None = not mentioned).

    Single-gap rules in one left-to-right sweep, then the forward negative
    fill. Recorded values are never changed.
    """
    out = list(series)
    n = len(out)
    for i in range(1, n - 1):
        if series[i] is not None:
            continue
        prev, nxt = series[i - 1], series[i + 1]
        if prev is POS and nxt in (POS, NEG):
            out[i] = POS
        elif prev is NEG and nxt is NEG:
            out[i] = NEG
    last_pos = max((i for i, v in enumerate(out) if v is POS), default=-1)
    first_neg = next((i for i in range(last_pos + 1, n) if out[i] is NEG), None)
    if first_neg is not None:
        for i in range(first_neg + 1, n):
            if out[i] is None:
                out[i] = NEG
    return out


def impute_missing(daily: DailyConditionMap) -> DailyConditionMap:
    days: list[dict[str, Polarity]] = [dict(d) for d in daily.days]
    for cui in daily.cuis():
        filled = impute_series([d.get(cui) for d in daily.days])
        for i, v in enumerate(filled):
            if v is not None:
                days[i][cui] = v
    return DailyConditionMap(daily.patient_id, days)


def stage_bounds(los: int) -> list[tuple[int, int]]:
    """Day ranges of the stages of a stay of ``los`` days.

    Stage 1 is days 1-2, the discharge day stands alone and the days in
    between form 3-day windows (the last may be shorter). With ``los == 2``
    stage 1 shrinks to day 1 so that the discharge day stays separate.
    """
    if los < 2:
        raise ShortStayError(f"length of stay {los} < 2")
    if los == 2:
        return [(1, 1), (2, 2)]
    bounds = [(1, 2)]
    start = 3
    while start <= los - 1:
        bounds.append((start, min(start + 2, los - 1)))
        start += 3
    bounds.append((los, los))
    return bounds


def segment_stages(daily: DailyConditionMap, disposition: Disposition | None) -> StageSeries:
    stages = []
    for k, (a, b) in enumerate(stage_bounds(daily.los), start=1):
        cond: dict[str, Polarity] = {}
        for d in range(a, b + 1):
            for cui, pol in daily.days[d - 1].items():
                _merge(cond, cui, pol)
        stages.append(Stage(k, a, b, cond))
    return StageSeries(daily.patient_id, stages, disposition, daily.los)


def build_stage_series(
    patient_id: str,
    notes: Iterable[StructuredNote],
    los: int,
    disposition: Disposition | None,
) -> StageSeries:
    """align -> impute -> segment for one patient."""
    return segment_stages(impute_missing(align_days(patient_id, notes, los)), disposition)


def stage_series_from_records(records: Sequence[Mapping], disposition: Disposition | None = None) -> StageSeries:
    """Rebuild a :class:`StageSeries` from its ``stages.jsonl`` rows."""
    records = sorted(records, key=lambda r: r["stage"])
    stages = []
    for r in records:
        cond = {c: POS for c in r["positives"]}
        cond.update({c: NEG for c in r["negatives"]})
        stages.append(Stage(int(r["stage"]), int(r["day_range"][0]), int(r["day_range"][1]), cond))
    los = stages[-1].last_day if stages else 0
    return StageSeries(str(records[0]["patient_id"]), stages, disposition, los)


def disposition_from_dict(d: Mapping | None) -> Disposition | None:
    if not d:
        return None
    return Disposition(str(d["patient_id"]), DispositionStatus(d["status"]), int(d["discharge_day"]))
