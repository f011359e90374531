"""Synthetic cohorts with planted subgroups, severity dynamics and ground truth.

Every patient belongs to one planted cluster. A cluster fixes a symptom
signature, the infection and organ-dysfunction concepts its patients get,
one concept that clears on improvement ("treated") and one that appears on
deterioration ("emerging"), and per-stage outcome transition matrices.

Generation order per patient: outcome chain -> severity scores -> stage
condition maps -> note text and vitals. The outcome chain is drawn first
and the first-stage score is then chosen so the score walk stays in 1..4;
for that to always be possible the stay is forced to end (Discharge or
Decease) by stage ``max_stages`` <= 5.

With ``sampling="stratified"`` the outcomes of each (cluster, stage,
previous state) group are allocated by largest remainder from the planted
row and then shuffled, so empirical frequencies sit within 1/n of the
planted ones. ``sampling="iid"`` draws every outcome independently.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ._io import dumps_json, write_csv, write_json, write_jsonl
from .corpus import VITAL_RANGES
from .pathways import COLUMNS, CONTINUING, START, TERMINAL
from .severity import FlagConfig
from .textproc.notes import TextResources
from .timeline import stage_bounds

logger = logging.getLogger(__name__)

MAX_STAGES_LIMIT = 5
_DELTA = {"Improve": -1, "Persistent": 0, "Deteriorate": 1}

TREATED_CUIS = ("X0000030", "X0000007")  # tachypnea, edema
EMERGING_CUIS = ("X0000028", "X0000029")  # erythema, fistula
INFECTION_CUIS = ("X0000014", "X0000013", "X0000015", "X0000016", "X0000048")
ORGAN_CUIS = ("X0000017", "X0000019", "X0000046")
HYPOTENSION_CUI = "X0000005"
FLUIDS_CUI = "X0000020"
LOCAL_SURFACE = "port site tenderness"


class InfeasibleConfigError(ValueError):
    pass


@dataclass
class GeneratorConfig:
    n_patients: int = 400
    n_clusters: int = 8
    seed: int = 0
    signature_positive: int = 3  # concepts affirmed by a cluster's patients
    signature_negative: int = 1  # concepts explicitly denied by a cluster's patients
    signature_prevalence: float = 0.95
    background_prevalence: float = 0.03
    local_concept_rate: float = 0.02  # patients mentioning an out-of-dictionary finding
    prevalence: list[dict[str, float]] | None = None  # per cluster {cui: p}, replaces the signature
    transitions: dict | None = None  # {cluster: {stage: {row: {col: p}}}}
    max_stages: int = 5
    extra_day_probs: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)  # last mid-window length 1/2/3
    missing_note_rate: float = 0.15
    misspelling_rate: float = 0.05
    bad_vitals_rate: float = 0.005
    sampling: str = "stratified"
    start_date: str = "2150-01-01"

    def validate(self) -> None:
        if self.n_patients < 1:
            raise InfeasibleConfigError("n_patients must be >= 1")
        if self.n_clusters < 1:
            raise InfeasibleConfigError("n_clusters must be >= 1")
        if not 2 <= self.max_stages <= MAX_STAGES_LIMIT:
            raise InfeasibleConfigError(f"max_stages must be in [2, {MAX_STAGES_LIMIT}]")
        if self.sampling not in ("stratified", "iid"):
            raise InfeasibleConfigError(f"unknown sampling {self.sampling!r}")
        for name in ("signature_prevalence", "background_prevalence", "local_concept_rate",
                     "missing_note_rate", "misspelling_rate", "bad_vitals_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InfeasibleConfigError(f"{name} must be in [0, 1]")
        if len(self.extra_day_probs) != 3 or abs(sum(self.extra_day_probs) - 1.0) > 1e-9:
            raise InfeasibleConfigError("extra_day_probs must be three probabilities summing to 1")
        if self.prevalence is not None:
            if len(self.prevalence) != self.n_clusters:
                raise InfeasibleConfigError("one prevalence map per cluster required")
            for prev in self.prevalence:
                if any(not 0.0 <= p <= 1.0 for p in prev.values()):
                    raise InfeasibleConfigError("prevalences must lie in [0, 1]")
        if self.transitions is not None:
            check_transitions(self.transitions, self.n_clusters, self.max_stages)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["extra_day_probs"] = list(self.extra_day_probs)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "GeneratorConfig":
        d = dict(d)
        if "extra_day_probs" in d:
            d["extra_day_probs"] = tuple(d["extra_day_probs"])
        if d.get("transitions") is not None:
            d["transitions"] = normalize_transition_keys(d["transitions"])
        return cls(**d)


# planted matrices -------------------------------------------------------------


def row_states(stage: int) -> tuple[str, ...]:
    return (START,) if stage == 2 else CONTINUING


def allowed_columns(stage: int, max_stages: int) -> tuple[str, ...]:
    return TERMINAL if stage >= max_stages else COLUMNS


def normalize_transition_keys(t: Mapping) -> dict[int, dict[int, dict[str, dict[str, float]]]]:
    """JSON turns int keys into strings; turn them back."""
    return {
        int(c): {int(s): {r: {k: float(p) for k, p in row.items()} for r, row in rows.items()} for s, rows in stages.items()}
        for c, stages in t.items()
    }


def check_transitions(t: Mapping, n_clusters: int, max_stages: int) -> None:
    """Raise unless every cluster has a stochastic row for every reachable (stage, state)."""
    for c in range(n_clusters):
        if c not in t:
            raise InfeasibleConfigError(f"no transitions for cluster {c}")
        for stage in range(2, max_stages + 1):
            rows = t[c].get(stage)
            if rows is None:
                raise InfeasibleConfigError(f"cluster {c}: no transitions for stage {stage}")
            for r in row_states(stage):
                row = rows.get(r)
                if row is None:
                    raise InfeasibleConfigError(f"cluster {c} stage {stage}: missing row {r}")
                allowed = allowed_columns(stage, max_stages)
                if set(row) - set(allowed):
                    raise InfeasibleConfigError(
                        f"cluster {c} stage {stage} row {r}: columns {sorted(set(row) - set(allowed))} not allowed"
                    )
                if any(p < 0 for p in row.values()) or abs(sum(row.values()) - 1.0) > 1e-9:
                    raise InfeasibleConfigError(f"cluster {c} stage {stage} row {r}: not a probability row")


def default_transitions(n_clusters: int, max_stages: int, seed: int) -> dict:
    """Dirichlet-drawn planted matrices, a fixed function of the arguments."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
    base = {"Discharge": 1.0, "Improve": 2.5, "Persistent": 2.0, "Deteriorate": 1.5, "Decease": 0.6}
    out: dict[int, dict[int, dict[str, dict[str, float]]]] = {}
    for c in range(n_clusters):
        tilt = rng.uniform(0.5, 2.0, size=len(COLUMNS))
        out[c] = {}
        for stage in range(2, max_stages + 1):
            cols = allowed_columns(stage, max_stages)
            out[c][stage] = {}
            for r in row_states(stage):
                alpha = np.array([4.0 * base[col] * tilt[COLUMNS.index(col)] for col in cols])
                p = rng.dirichlet(alpha)
                out[c][stage][r] = {col: float(v) for col, v in zip(cols, p)}
    return out


def largest_remainder(n: int, probs: Sequence[float]) -> list[int]:
    """Integer counts summing to ``n`` closest to ``n * probs`` (ties to the earlier entry)."""
    raw = [n * p for p in probs]
    counts = [math.floor(x) for x in raw]
    left = n - sum(counts)
    order = sorted(range(len(probs)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:left]:
        counts[i] += 1
    return counts


# concepts and surfaces -----------------------------------------------------


@dataclass
class _Surfaces:
    """Surface forms per CUI from the packaged lexicon, split into clean and misspelled."""

    clean: dict[str, list[str]]
    misspelled: dict[str, list[str]]
    names: dict[str, str]

    @classmethod
    def load(cls, res: TextResources) -> "_Surfaces":
        clean: dict[str, list[str]] = {}
        bad: dict[str, list[str]] = {}
        for e in res.lexicon.entries:
            cui = res.dictionary.normalize(e.surface_term)
            if cui.startswith("LOCAL:"):
                continue
            target = clean if e.surface_term in res.dictionary.exact else bad
            target.setdefault(cui, []).append(e.surface_term)
        names = {c: res.dictionary.preferred_name(c) for c in clean}
        return cls(clean, bad, names)


def _symptom_pool(surfaces: _Surfaces) -> list[str]:
    flagged: set[str] = set()
    for cuis in FlagConfig.default().to_dict().values():
        flagged.update(cuis)
    reserved = flagged | set(TREATED_CUIS) | set(EMERGING_CUIS)
    return sorted(c for c in surfaces.clean if c not in reserved)


@dataclass
class ClusterProfile:
    cluster: int
    signature: dict[str, str]  # cui -> "Positive" | "Negative"
    infection: str
    organ: str
    treated: str
    emerging: str
    prevalence: dict[str, float] | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _cluster_profiles(cfg: GeneratorConfig, pool: list[str]) -> list[ClusterProfile]:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 202]))
    per = cfg.signature_positive + cfg.signature_negative
    order = list(rng.permutation(len(pool)))
    profiles = []
    for c in range(cfg.n_clusters):
        if cfg.prevalence is None:
            # disjoint signatures while the pool lasts, then wrap around
            picks = [pool[order[(c * per + j) % len(pool)]] for j in range(per)]
            sig = {cui: ("Positive" if j < cfg.signature_positive else "Negative") for j, cui in enumerate(picks)}
        else:
            sig = {}
        profiles.append(
            ClusterProfile(
                cluster=c,
                signature=sig,
                infection=INFECTION_CUIS[c % len(INFECTION_CUIS)],
                organ=ORGAN_CUIS[c % len(ORGAN_CUIS)],
                treated=TREATED_CUIS[c % 2],
                emerging=EMERGING_CUIS[c % 2],
                prevalence=None if cfg.prevalence is None else dict(cfg.prevalence[c]),
            )
        )
    return profiles


# ground truth -------------------------------------------------------------------


@dataclass
class PatientTruth:
    patient_id: str
    cluster: int
    los: int
    scores: list[int]  # one per stage
    outcomes: list[str]  # X_2 .. X_T
    disposition: str
    stage_conditions: list[dict[str, str]] = field(default_factory=list, repr=False)


@dataclass
class GroundTruth:
    config: dict
    transitions: dict  # {cluster: {stage: {row: {col: p}}}}
    counts: dict  # same nesting, realized integer counts
    clusters: list[ClusterProfile]
    patients: list[PatientTruth]

    @property
    def labels(self) -> dict[str, int]:
        return {p.patient_id: p.cluster for p in self.patients}


def ground_truth_report(truth: GroundTruth) -> dict:
    """JSON-ready dump of every planted parameter and label."""

    def keyed(t):
        return {str(c): {str(s): rows for s, rows in stages.items()} for c, stages in t.items()}

    return {
        "config": truth.config,
        "transitions": keyed(truth.transitions),
        "counts": keyed(truth.counts),
        "clusters": [p.to_dict() for p in truth.clusters],
        "cluster_labels": [p.cluster for p in truth.patients],
        "patients": [
            {
                "patient_id": p.patient_id,
                "cluster": p.cluster,
                "los": p.los,
                "scores": p.scores,
                "outcomes": p.outcomes,
                "disposition": p.disposition,
                "stage_conditions": p.stage_conditions,
            }
            for p in truth.patients
        ],
        "planted_edges": [
            {"cluster": p.cluster, "outcome": "Improve", "treated": p.treated}
            for p in truth.clusters
        ]
        + [{"cluster": p.cluster, "outcome": "Deteriorate", "emerging": p.emerging} for p in truth.clusters],
    }


def ground_truth_from_report(d: Mapping) -> GroundTruth:
    return GroundTruth(
        config=dict(d["config"]),
        transitions=normalize_transition_keys(d["transitions"]),
        counts={int(c): {int(s): rows for s, rows in st.items()} for c, st in d["counts"].items()},
        clusters=[ClusterProfile(**p) for p in d["clusters"]],
        patients=[PatientTruth(**p) for p in d["patients"]],
    )


# generation -------------------------------------------------------------------


@dataclass
class SyntheticCohort:
    notes: list[dict]
    vitals: list[tuple[str, str, str, str]]
    demographics: list[dict]
    truth: GroundTruth

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "notes": out / "notes.jsonl",
            "vitals": out / "vitals.csv",
            "demographics": out / "demographics.jsonl",
            "ground_truth": out / "ground_truth.json",
        }
        write_jsonl(paths["notes"], self.notes)
        write_csv(paths["vitals"], ["patient_id", "chart_time", "item", "value"], self.vitals)
        write_jsonl(paths["demographics"], self.demographics)
        write_json(paths["ground_truth"], ground_truth_report(self.truth))
        return paths


def _sample_outcomes(cfg: GeneratorConfig, trans, clusters: np.ndarray, rng: np.random.Generator):
    """Outcome chains for all patients plus realized counts."""
    n = len(clusters)
    chains: list[list[str]] = [[] for _ in range(n)]
    counts: dict[int, dict[int, dict[str, dict[str, int]]]] = {}
    alive = list(range(n))
    for stage in range(2, cfg.max_stages + 1):
        groups: dict[tuple[int, str], list[int]] = {}
        for i in alive:
            row = START if stage == 2 else chains[i][-1]
            groups.setdefault((int(clusters[i]), row), []).append(i)
        still = []
        for (c, row), members in sorted(groups.items()):
            probs = trans[c][stage][row]
            cols = [col for col in COLUMNS if col in probs]
            p = [probs[col] for col in cols]
            if cfg.sampling == "stratified":
                k = largest_remainder(len(members), p)
                draws = [col for col, m in zip(cols, k) for _ in range(m)]
                draws = [draws[j] for j in rng.permutation(len(draws))]
            else:
                draws = [cols[j] for j in rng.choice(len(cols), size=len(members), p=np.asarray(p) / sum(p))]
            tally = counts.setdefault(c, {}).setdefault(stage, {}).setdefault(row, {})
            for i, col in zip(members, draws):
                chains[i].append(col)
                tally[col] = tally.get(col, 0) + 1
                if col not in TERMINAL:
                    still.append(i)
        alive = sorted(still)
    return chains, counts


def _scores_for(chain: Sequence[str], rng: np.random.Generator) -> list[int]:
    steps = [_DELTA[o] for o in chain[:-1]]  # the final, terminal outcome does not move the score
    cum = [0]
    for d in steps:
        cum.append(cum[-1] + d)
    lo, hi = 1 - min(cum), 4 - max(cum)
    s1 = int(rng.integers(lo, hi + 1))
    scores = [s1 + c for c in cum]  # stages 1 .. T-1
    scores.append(scores[-1])  # discharge-day stage mirrors the stage before it
    return scores


def _los_for(n_stages: int, cfg: GeneratorConfig, rng: np.random.Generator) -> int:
    if n_stages == 2:
        return 3
    r = int(rng.choice(3, p=list(cfg.extra_day_probs))) + 1
    return 3 + 3 * (n_stages - 3) + r


def _stage_maps(profile: ClusterProfile, base: dict[str, str], scores: list[int], chain: list[str]) -> list[dict[str, str]]:
    """True condition map of every stage."""
    maps = []
    ever = set()
    treated_state = "Positive"
    emerging_state = None
    for t, s in enumerate(scores, start=1):
        if t >= 2 and t - 2 < len(chain):
            outcome = chain[t - 2]
            if outcome == "Improve":
                treated_state = "Negative"
            elif outcome == "Deteriorate":
                emerging_state = "Positive"
        m = dict(base)
        flags = {
            profile.infection: s >= 2,
            profile.organ: s >= 3,
            HYPOTENSION_CUI: s >= 4,
        }
        for cui, on in flags.items():
            if on:
                m[cui] = "Positive"
                ever.add(cui)
            elif cui in ever:
                m[cui] = "Negative"  # documented as resolved once it has been present
        if s >= 4:
            m[FLUIDS_CUI] = "Positive"
        m[profile.treated] = treated_state
        if emerging_state:
            m[profile.emerging] = emerging_state
        maps.append(m)
    return maps


_POS_TEMPLATES = ("{S} noted.", "Patient reports {s}.", "Complains of {s}.", "Assessment: {s}.", "No change in {s}.")
_NEG_TEMPLATES = ("Denies {s}.", "No {s}.", "Negative for {s}.", "No evidence of {s}.", "{S} resolved.")
_INFECTION_TEMPLATES = ("Assessment consistent with {s}.", "{S} suspected.")


def _cap(s: str) -> str:
    return s[:1].upper() + s[1:]


class _Renderer:
    def __init__(self, surfaces: _Surfaces, cfg: GeneratorConfig, rng: np.random.Generator):
        self.surfaces = surfaces
        self.cfg = cfg
        self.rng = rng

    def surface(self, cui: str) -> str:
        if cui.startswith("LOCAL:"):
            return LOCAL_SURFACE
        bad = self.surfaces.misspelled.get(cui)
        if bad and self.rng.random() < self.cfg.misspelling_rate:
            return bad[int(self.rng.integers(len(bad)))]
        opts = self.surfaces.clean[cui]
        return opts[int(self.rng.integers(len(opts)))]

    def pick(self, options: Sequence[str]) -> str:
        return options[int(self.rng.integers(len(options)))]

    def note(self, conditions: Mapping[str, str], profile: ClusterProfile) -> str:
        sentences = []
        pos = [c for c in sorted(conditions) if conditions[c] == "Positive"]
        neg = [c for c in sorted(conditions) if conditions[c] == "Negative"]
        order = list(self.rng.permutation(len(pos) + len(neg)))
        items = [(c, "Positive") for c in pos] + [(c, "Negative") for c in neg]
        items = [items[i] for i in order]
        # the scope-break case: one affirmed and one denied finding joined by "but"
        if pos and neg and self.rng.random() < 0.5:
            a = next(c for c, p in items if p == "Positive")
            b = next(c for c, p in items if p == "Negative")
            sentences.append(f"The patient has {self.surface(a)} but denies any {self.surface(b)}.")
            items = [it for it in items if it[0] not in (a, b)]
        for cui, pol in items:
            s = self.surface(cui)
            if cui == FLUIDS_CUI:
                text = self.pick(("Started {s}.", "{S} given."))
            elif cui == HYPOTENSION_CUI and pol == "Positive":
                text = self.pick(("Patient {s}.", "{S} noted.")) if s == "hypotensive" else "{S} noted."
            elif cui == profile.infection and pol == "Positive":
                text = self.pick(_INFECTION_TEMPLATES)
            elif pol == "Positive":
                text = self.pick(_POS_TEMPLATES)
            else:
                text = self.pick(_NEG_TEMPLATES)
            if cui == HYPOTENSION_CUI and s == "hypotensive" and pol == "Negative":
                text = "Not {s}."
            sentences.append(text.format(s=s, S=_cap(s)))
        return " ".join(sentences) if sentences else "Patient resting comfortably."


_NORMAL = {
    "temp_c": (36.6, 37.4),
    "heart_rate": (65.0, 85.0),
    "resp_rate": (12.0, 18.0),
    "wbc": (5.0, 10.0),
    "systolic_bp": (105.0, 135.0),
    "mean_arterial_pressure": (70.0, 95.0),
}
_SIRS_ITEMS = ("temp_c", "heart_rate", "resp_rate", "wbc")


def _abnormal(item: str, rng: np.random.Generator) -> float:
    if item == "temp_c":
        return rng.uniform(38.5, 39.5) if rng.random() < 0.8 else rng.uniform(35.0, 35.8)
    if item == "heart_rate":
        return rng.uniform(95.0, 130.0)
    if item == "resp_rate":
        return rng.uniform(22.0, 30.0)
    if item == "wbc":
        return rng.uniform(13.0, 20.0) if rng.random() < 0.8 else rng.uniform(2.0, 3.5)
    if item == "systolic_bp":
        return rng.uniform(75.0, 88.0)
    if item == "mean_arterial_pressure":
        return rng.uniform(50.0, 62.0)
    raise KeyError(item)


def _day_vitals(score: int, rng: np.random.Generator) -> dict[str, float]:
    k = int(rng.integers(2, 4))
    abnormal = set(_SIRS_ITEMS[i] for i in rng.permutation(4)[:k])
    if score >= 4:
        abnormal |= {"systolic_bp", "mean_arterial_pressure"}
    out = {}
    for item in VITAL_RANGES:
        if item in abnormal:
            out[item] = _abnormal(item, rng)
        else:
            lo, hi = _NORMAL[item]
            out[item] = rng.uniform(lo, hi)
    return out


def _iso(ts: datetime) -> str:
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def generate_cohort(config: GeneratorConfig | None = None, resources: TextResources | None = None) -> SyntheticCohort:
    """Draw a cohort; the result is a pure function of ``config``.

    Raises:
        InfeasibleConfigError: for an invalid configuration.
    """
    cfg = GeneratorConfig() if config is None else config
    cfg.validate()
    res = TextResources.default() if resources is None else resources
    surfaces = _Surfaces.load(res)
    pool = _symptom_pool(surfaces)
    profiles = _cluster_profiles(cfg, pool)
    trans = cfg.transitions if cfg.transitions is not None else default_transitions(cfg.n_clusters, cfg.max_stages, cfg.seed)

    root = np.random.SeedSequence(cfg.seed)
    rng_cohort = np.random.default_rng(root.spawn(1)[0])
    clusters = rng_cohort.integers(0, cfg.n_clusters, size=cfg.n_patients)
    chains, counts = _sample_outcomes(cfg, trans, clusters, rng_cohort)
    patient_seeds = np.random.SeedSequence([cfg.seed, 303]).spawn(cfg.n_patients)
    start = datetime.fromisoformat(cfg.start_date).replace(tzinfo=timezone.utc)

    notes, vitals, demographics, patients = [], [], [], []
    for i in range(cfg.n_patients):
        rng = np.random.default_rng(patient_seeds[i])
        pid = f"P{i + 1:05d}"
        c = int(clusters[i])
        profile = profiles[c]
        chain = chains[i]
        n_stages = len(chain) + 1
        scores = _scores_for(chain, rng)
        los = _los_for(n_stages, cfg, rng)
        bounds = stage_bounds(los)
        assert len(bounds) == n_stages

        base: dict[str, str] = {}
        if profile.prevalence is not None:
            for cui, p in sorted(profile.prevalence.items()):
                if rng.random() < p:
                    base[cui] = "Positive"
        else:
            for cui, pol in profile.signature.items():
                if rng.random() < cfg.signature_prevalence:
                    base[cui] = pol
            for cui in pool:
                if cui not in base and cui not in profile.signature and rng.random() < cfg.background_prevalence:
                    base[cui] = "Positive"
        if rng.random() < cfg.local_concept_rate:
            base["LOCAL:" + LOCAL_SURFACE.replace(" ", "_")] = "Positive"
        maps = _stage_maps(profile, base, scores, chain)

        renderer = _Renderer(surfaces, cfg, rng)
        admit = start + timedelta(days=i % 365)
        note_no = 0
        for k, (a, b) in enumerate(bounds):
            for day in range(a, b + 1):
                day0 = admit + timedelta(days=day - 1)
                # vitals every day
                for item, value in _day_vitals(scores[k], rng).items():
                    vitals.append((pid, _iso(day0 + timedelta(hours=6)), item, f"{value:.1f}"))
                if rng.random() < cfg.bad_vitals_rate:
                    vitals.append((pid, _iso(day0 + timedelta(hours=7)), "temp_c", f"{rng.uniform(97.0, 103.0):.1f}"))
                middle = b - a == 2 and day == a + 1 and k > 0
                if middle and rng.random() < cfg.missing_note_rate:
                    continue
                note_no += 1
                minute = int(rng.integers(0, 60))
                notes.append({
                    "patient_id": pid,
                    "note_id": f"{pid}-N{note_no:03d}",
                    "category": "nursing",
                    "chart_time": _iso(day0 + timedelta(hours=8, minutes=minute)),
                    "text": renderer.note(maps[k], profile),
                })
                if day == 1:
                    note_no += 1
                    notes.append({
                        "patient_id": pid,
                        "note_id": f"{pid}-N{note_no:03d}",
                        "category": "ecg",
                        "chart_time": _iso(day0 + timedelta(hours=9)),
                        "text": f"ECG: sinus rhythm, rate {int(rng.integers(60, 100))}.",
                    })
        disposition = chain[-1]
        last = admit + timedelta(days=los - 1)
        note_no += 1
        text = (
            f"Discharge summary. Patient expired on hospital day {los}."
            if disposition == "Decease"
            else f"Discharge summary. Patient discharged home on hospital day {los}."
        )
        notes.append({
            "patient_id": pid,
            "note_id": f"{pid}-N{note_no:03d}",
            "category": "discharge_summary",
            "chart_time": _iso(last + timedelta(hours=18)),
            "text": text,
        })
        demographics.append({
            "patient_id": pid,
            "sex": "M" if rng.random() < 0.54 else "F",
            "age_years": int(rng.integers(18, 95)),
        })
        patients.append(PatientTruth(pid, c, los, scores, list(chain), disposition, maps))

    truth = GroundTruth(cfg.to_dict(), trans, counts, profiles, patients)
    logger.info("generated %d patients in %d clusters", cfg.n_patients, cfg.n_clusters)
    return SyntheticCohort(notes, vitals, demographics, truth)


# dense / ternary fixtures ------------------------------------------------------


def planted_gaussians(n: int, k: int, dim: int, spread: float = 0.5, separation: float = 6.0, seed: int = 0):
    """``(x, labels)``: k isotropic Gaussian blobs with well-separated centers."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(k, dim))
    centers *= separation / np.linalg.norm(centers, axis=1, keepdims=True)
    labels = rng.permutation(np.arange(n) % k)
    x = centers[labels] + spread * rng.normal(size=(n, dim))
    return x, labels


def rank2_ternary(n: int, dim: int, seed: int = 0, cut: float = 0.5) -> np.ndarray:
    """Ternary matrix ``sign(U V^T)`` with small entries zeroed; rank-2 structure."""
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(n, 2))
    v = rng.normal(size=(dim, 2))
    z = u @ v.T
    out = np.sign(z).astype(np.int8)
    out[np.abs(z) <= cut] = 0
    return out


def cohort_digest_text(cohort: SyntheticCohort) -> str:
    """Canonical text of the cohort, handy for determinism checks."""
    return dumps_json({"notes": cohort.notes, "vitals": cohort.vitals, "demographics": cohort.demographics})
