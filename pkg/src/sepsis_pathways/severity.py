"""Four-state sepsis severity per patient stage from vitals and note flags.

The ladder, checked top-down:

* SepticShock  - infection, organ dysfunction, hypotension and IV fluids
* SevereSepsis - infection and organ dysfunction
* Sepsis       - infection and at least two SIRS criteria
* SIRS         - at least two SIRS criteria
* Unknown      - anything else
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from datetime import date
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Disposition, VitalsRecord, day_index
from .textproc.matching import Polarity
from .timeline import StageSeries

FLAG_NAMES = ("infection_suspected", "organ_dysfunction", "hypotension_documented", "iv_fluids_given")


class SepsisState(str, Enum):
    SIRS = "SIRS"
    SEPSIS = "Sepsis"
    SEVERE_SEPSIS = "SevereSepsis"
    SEPTIC_SHOCK = "SepticShock"
    UNKNOWN = "Unknown"

    @property
    def score(self) -> int | None:
        return _SCORES.get(self)

    @classmethod
    def from_score(cls, score: int | None) -> "SepsisState":
        for state, s in _SCORES.items():
            if s == score:
                return state
        if score is None:
            return cls.UNKNOWN
        raise ValueError(f"no state with score {score!r}")


_SCORES = {
    SepsisState.SIRS: 1,
    SepsisState.SEPSIS: 2,
    SepsisState.SEVERE_SEPSIS: 3,
    SepsisState.SEPTIC_SHOCK: 4,
}


@dataclass(frozen=True)
class SeverityThresholds:
    temp_high: float = 38.0
    temp_low: float = 36.0
    heart_rate: float = 90.0
    resp_rate: float = 20.0
    wbc_high: float = 12.0
    wbc_low: float = 4.0
    systolic_bp: float = 90.0
    mean_arterial_pressure: float = 65.0

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "SeverityThresholds":
        if not d:
            return cls()
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown threshold(s): {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass
class StageClinicalFeatures:
    """Worst-case vitals over a stage plus note-derived flags. ``None`` = not measured."""

    max_temp: float | None = None
    min_temp: float | None = None
    max_heart_rate: float | None = None
    max_resp_rate: float | None = None
    max_wbc: float | None = None
    min_wbc: float | None = None
    min_systolic_bp: float | None = None
    min_mean_arterial_pressure: float | None = None
    infection_suspected: bool = False
    organ_dysfunction: bool = False
    hypotension_documented: bool = False
    iv_fluids_given: bool = False

    def has_sirs_vitals(self) -> bool:
        return any(
            v is not None
            for v in (self.max_temp, self.min_temp, self.max_heart_rate, self.max_resp_rate, self.max_wbc, self.min_wbc)
        )


def sirs_count(features: StageClinicalFeatures, thr: SeverityThresholds | None = None) -> int | None:
    """Number of satisfied SIRS criteria (0-4), or None when no SIRS vital was measured."""
    thr = SeverityThresholds() if thr is None else thr
    f = features
    if not f.has_sirs_vitals():
        return None
    temp = (f.max_temp is not None and f.max_temp > thr.temp_high) or (
        f.min_temp is not None and f.min_temp < thr.temp_low
    )
    hr = f.max_heart_rate is not None and f.max_heart_rate > thr.heart_rate
    rr = f.max_resp_rate is not None and f.max_resp_rate > thr.resp_rate
    wbc = (f.max_wbc is not None and f.max_wbc > thr.wbc_high) or (f.min_wbc is not None and f.min_wbc < thr.wbc_low)
    return int(temp) + int(hr) + int(rr) + int(wbc)


def is_hypotensive(features: StageClinicalFeatures, thr: SeverityThresholds | None = None) -> bool:
    thr = SeverityThresholds() if thr is None else thr
    f = features
    return (
        f.hypotension_documented
        or (f.min_systolic_bp is not None and f.min_systolic_bp < thr.systolic_bp)
        or (f.min_mean_arterial_pressure is not None and f.min_mean_arterial_pressure < thr.mean_arterial_pressure)
    )


def classify_severity(features: StageClinicalFeatures, thr: SeverityThresholds | None = None) -> SepsisState:
    thr = SeverityThresholds() if thr is None else thr
    f = features
    if f.infection_suspected and f.organ_dysfunction:
        if is_hypotensive(f, thr) and f.iv_fluids_given:
            return SepsisState.SEPTIC_SHOCK
        return SepsisState.SEVERE_SEPSIS
    n = sirs_count(f, thr) or 0
    if n >= 2:
        return SepsisState.SEPSIS if f.infection_suspected else SepsisState.SIRS
    return SepsisState.UNKNOWN


# flags ---------------------------------------------------------------------


@dataclass(frozen=True)
class FlagConfig:
    """Which CUIs set which note flag."""

    cuis: dict[str, frozenset[str]]

    def __post_init__(self):
        unknown = set(self.cuis) - set(FLAG_NAMES)
        if unknown:
            raise ValueError(f"unknown flag name(s): {sorted(unknown)}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Iterable[str]]) -> "FlagConfig":
        return cls({k: frozenset(str(c) for c in v) for k, v in d.items()})

    @classmethod
    def load(cls, path) -> "FlagConfig":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))

    @classmethod
    def default(cls) -> "FlagConfig":
        text = resources.files("sepsis_pathways.resources").joinpath("flags.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {name: sorted(self.cuis.get(name, ())) for name in FLAG_NAMES}

    def flags_for(self, conditions: Mapping[str, Polarity]) -> dict[str, bool]:
        """Flags set by the Positive CUIs of a condition map; Negative never sets one."""
        positive = {c for c, p in conditions.items() if p is Polarity.POSITIVE}
        return {name: bool(positive & self.cuis.get(name, frozenset())) for name in FLAG_NAMES}


def aggregate_vitals(records: Iterable[VitalsRecord]) -> dict[str, float | None]:
    """Worst-case aggregates of a set of vitals records."""
    vals: dict[str, list[float]] = {}
    for r in records:
        vals.setdefault(r.item, []).append(r.value)

    def agg(item, fn):
        v = vals.get(item)
        return fn(v) if v else None

    return {
        "max_temp": agg("temp_c", max),
        "min_temp": agg("temp_c", min),
        "max_heart_rate": agg("heart_rate", max),
        "max_resp_rate": agg("resp_rate", max),
        "max_wbc": agg("wbc", max),
        "min_wbc": agg("wbc", min),
        "min_systolic_bp": agg("systolic_bp", min),
        "min_mean_arterial_pressure": agg("mean_arterial_pressure", min),
    }


@dataclass
class SeverityTimeline:
    patient_id: str
    states: list[SepsisState]
    disposition: Disposition | None = None
    features: list[StageClinicalFeatures] = field(default_factory=list, repr=False)

    @property
    def scores(self) -> list[int | None]:
        return [s.score for s in self.states]

    def to_rows(self) -> list[tuple]:
        """``severity.csv`` rows: patient_id, stage, state, score (empty for Unknown)."""
        return [
            (self.patient_id, k, s.value, "" if s.score is None else s.score)
            for k, s in enumerate(self.states, start=1)
        ]


def stage_features(
    conditions: Mapping[str, Polarity],
    vitals: Sequence[VitalsRecord],
    flags: FlagConfig,
) -> StageClinicalFeatures:
    return StageClinicalFeatures(**aggregate_vitals(vitals), **flags.flags_for(conditions))


def severity_timeline(
    series: StageSeries,
    vitals: Sequence[VitalsRecord],
    anchor: date,
    flags: FlagConfig | None = None,
    thresholds: SeverityThresholds | None = None,
) -> SeverityTimeline:
    """Classify every stage of ``series``.

    Args:
        series: the patient's imputed stage series.
        vitals: all of the patient's vitals records.
        anchor: admission anchor used to place vitals on hospital days.
        flags: flag CUI sets; defaults to the packaged ones.
        thresholds: SIRS/hypotension cut-offs.
    """
    flags = FlagConfig.default() if flags is None else flags
    by_day: dict[int, list[VitalsRecord]] = {}
    for r in vitals:
        by_day.setdefault(day_index(r.chart_time, anchor), []).append(r)
    states, feats = [], []
    for stage in series.stages:
        recs = [r for d in range(stage.first_day, stage.last_day + 1) for r in by_day.get(d, ())]
        f = stage_features(stage.conditions, recs, flags)
        feats.append(f)
        states.append(classify_severity(f, thresholds))
    return SeverityTimeline(series.patient_id, states, series.disposition, feats)


def features_to_dict(f: StageClinicalFeatures) -> dict:
    return asdict(f)
