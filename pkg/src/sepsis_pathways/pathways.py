"""Stage-to-stage outcomes, per-subgroup transition matrices, annotations and exports.

An outcome ``X_t`` describes what happened between stage ``t - 1`` and
stage ``t`` (t >= 2). The matrix for target stage ``t`` conditions on the
previous outcome ``X_{t-1}``; for ``t = 2`` there is no previous outcome and
the row is the virtual ``Start`` state.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .corpus import DispositionStatus
from .severity import SeverityTimeline
from .textproc.matching import Polarity
from .timeline import StageSeries


class Outcome(str, Enum):
    DISCHARGE = "Discharge"
    IMPROVE = "Improve"
    PERSISTENT = "Persistent"
    DETERIORATE = "Deteriorate"
    DECEASE = "Decease"
    UNKNOWN = "Unknown"


START = "Start"
# row states in column order of the exported matrices
ROW_STATES = (START, Outcome.IMPROVE.value, Outcome.PERSISTENT.value, Outcome.DETERIORATE.value)
COLUMNS = tuple(o.value for o in Outcome if o is not Outcome.UNKNOWN)
TERMINAL = (Outcome.DISCHARGE.value, Outcome.DECEASE.value)
CONTINUING = (Outcome.IMPROVE.value, Outcome.PERSISTENT.value, Outcome.DETERIORATE.value)


def label_outcome(
    prev_score: int | None,
    next_score: int | None,
    stay_ends: bool = False,
    status: DispositionStatus | None = None,
) -> Outcome:
    """Outcome of one stage boundary.

    Args:
        prev_score, next_score: severity scores (None = Unknown).
        stay_ends: whether the later stage is the last stage of the stay.
        status: the disposition when known.
    """
    if stay_ends and status is not None:
        return Outcome.DECEASE if status is DispositionStatus.DECEASE else Outcome.DISCHARGE
    if prev_score is None or next_score is None:
        return Outcome.UNKNOWN
    if next_score < prev_score:
        return Outcome.IMPROVE
    if next_score > prev_score:
        return Outcome.DETERIORATE
    return Outcome.PERSISTENT


def label_transitions(timeline: SeverityTimeline) -> list[Outcome]:
    """``out[k]`` is the outcome at stage ``k + 2`` (boundary k+1 -> k+2)."""
    scores = timeline.scores
    status = timeline.disposition.status if timeline.disposition is not None else None
    n = len(scores)
    return [label_outcome(scores[t - 1], scores[t], t == n - 1, status) for t in range(1, n)]


def _row_state(seq: Sequence[Outcome], k: int) -> str | None:
    """Row state conditioning outcome ``seq[k]``; None when it is not a continuing state."""
    if k == 0:
        return START
    prev = seq[k - 1].value
    return prev if prev in CONTINUING else None


@dataclass
class TransitionMatrix:
    subgroup: int
    stage: int  # target stage t of X_t
    counts: dict[str, dict[str, int]] = field(default_factory=dict)
    unknown: dict[str, int] = field(default_factory=dict)

    @property
    def rows(self) -> list[str]:
        return [r for r in ROW_STATES if r in self.counts or r in self.unknown]

    def row_total(self, row: str) -> int:
        return sum(self.counts.get(row, {}).values())

    def probabilities(self) -> dict[str, dict[str, float]]:
        """Row-normalized probabilities; Unknown is excluded and empty rows stay empty."""
        out = {}
        for row in self.rows:
            total = self.row_total(row)
            c = self.counts.get(row, {})
            out[row] = {col: c[col] / total for col in COLUMNS if c.get(col)} if total else {}
        return out

    def to_dict(self) -> dict:
        probs = self.probabilities()
        return {
            "subgroup": self.subgroup,
            "stage": self.stage,
            "rows": {
                row: {
                    "counts": {col: self.counts.get(row, {}).get(col, 0) for col in COLUMNS},
                    "unknown": self.unknown.get(row, 0),
                    "probabilities": {col: round(p, 10) for col, p in probs[row].items()},
                }
                for row in self.rows
            },
        }


def estimate_transitions(
    sequences: Mapping[str, Sequence[Outcome]],
    assignment: Mapping[str, int],
) -> dict[tuple[int, int], TransitionMatrix]:
    """Maximum-likelihood matrices keyed by ``(subgroup, target stage)``.

    Patients missing from ``assignment`` are skipped. A transition whose
    previous outcome is Unknown has no row and is not counted.
    """
    out: dict[tuple[int, int], TransitionMatrix] = {}
    for pid in sorted(sequences):
        if pid not in assignment:
            continue
        g = int(assignment[pid])
        seq = sequences[pid]
        for k, outcome in enumerate(seq):
            row = _row_state(seq, k)
            if row is None:
                continue
            key = (g, k + 2)
            m = out.setdefault(key, TransitionMatrix(g, k + 2))
            if outcome is Outcome.UNKNOWN:
                m.unknown[row] = m.unknown.get(row, 0) + 1
            else:
                row_counts = m.counts.setdefault(row, {})
                row_counts[outcome.value] = row_counts.get(outcome.value, 0) + 1
            if outcome.value in TERMINAL:
                break
    return dict(sorted(out.items()))


def stage2_distribution(
    sequences: Mapping[str, Sequence[Outcome]],
    assignment: Mapping[str, int],
    subgroups: Sequence[int] | None = None,
) -> dict[int, dict[str, float]]:
    """Per-subgroup distribution of the first-boundary outcome (Unknown excluded)."""
    counts: dict[int, Counter] = defaultdict(Counter)
    for pid, seq in sequences.items():
        if pid in assignment and seq and seq[0] is not Outcome.UNKNOWN:
            counts[int(assignment[pid])][seq[0].value] += 1
    groups = sorted(set(counts) | set(subgroups or ()))
    out = {}
    for g in groups:
        total = sum(counts[g].values())
        out[g] = {col: counts[g][col] / total for col in COLUMNS if counts[g][col]} if total else {}
    return out


def heatmap_rows(dist: Mapping[int, Mapping[str, float]]) -> tuple[list[str], list[list]]:
    """``stage2_heatmap.csv`` header and rows; an empty subgroup gives blank cells."""
    header = ["subgroup", *COLUMNS]
    rows = []
    for g in sorted(dist):
        d = dist[g]
        rows.append([g, *([f"{d.get(c, 0.0):.4f}" for c in COLUMNS] if d else [""] * len(COLUMNS))])
    return header, rows


# annotations ----------------------------------------------------------------


@dataclass(frozen=True)
class TransitionAnnotation:
    treated: tuple[tuple[str, float], ...] = ()
    emerging: tuple[tuple[str, float], ...] = ()

    def to_dict(self) -> dict:
        return {
            "treated": [[c, round(f, 10)] for c, f in self.treated],
            "emerging": [[c, round(f, 10)] for c, f in self.emerging],
        }


def annotate_transition(
    patient_ids: Sequence[str],
    prev_maps: Mapping[str, Mapping[str, Polarity]],
    next_maps: Mapping[str, Mapping[str, Polarity]],
    top_m: int = 2,
) -> TransitionAnnotation:
    """Most frequently treated and emerging conditions among the patients on an edge.

    treated(c): c Positive before and Negative-or-absent after.
    emerging(c): c Negative-or-absent before and Positive after.
    Ranked by fraction of edge patients, ties by CUI; zero fractions dropped.
    """
    n = len(patient_ids)
    if n == 0:
        return TransitionAnnotation()
    treated: Counter = Counter()
    emerging: Counter = Counter()
    for pid in patient_ids:
        before = prev_maps.get(pid, {})
        after = next_maps.get(pid, {})
        for c in set(before) | set(after):
            was = before.get(c) is Polarity.POSITIVE
            now = after.get(c) is Polarity.POSITIVE
            if was and not now:
                treated[c] += 1
            elif now and not was:
                emerging[c] += 1

    def top(counter: Counter):
        ranked = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
        return tuple((c, k / n) for c, k in ranked[:top_m])

    return TransitionAnnotation(top(treated), top(emerging))


@dataclass
class TransitionNetwork:
    subgroup: int
    matrices: dict[int, TransitionMatrix] = field(default_factory=dict)
    annotations: dict[tuple[int, str, str], TransitionAnnotation] = field(default_factory=dict)

    def edges(self) -> list[tuple[int, str, str, int, float]]:
        """``(stage, row, col, count, probability)`` for every observed transition."""
        out = []
        for t, m in sorted(self.matrices.items()):
            probs = m.probabilities()
            for row in m.rows:
                for col in COLUMNS:
                    k = m.counts.get(row, {}).get(col, 0)
                    if k:
                        out.append((t, row, col, k, probs[row][col]))
        return out


def build_networks(
    series: Mapping[str, StageSeries],
    sequences: Mapping[str, Sequence[Outcome]],
    assignment: Mapping[str, int],
    top_m: int = 2,
) -> dict[int, TransitionNetwork]:
    """Matrices plus treated/emerging annotations for every subgroup.

    Edges into Discharge or Decease carry no annotation.
    """
    matrices = estimate_transitions(sequences, assignment)
    nets: dict[int, TransitionNetwork] = {}
    for g in sorted({int(v) for v in assignment.values()}):
        nets[g] = TransitionNetwork(g)
    for (g, t), m in matrices.items():
        nets[g].matrices[t] = m
    edge_members: dict[tuple[int, int, str, str], list[str]] = defaultdict(list)
    for pid in sorted(sequences):
        if pid not in assignment:
            continue
        seq = sequences[pid]
        for k, outcome in enumerate(seq):
            row = _row_state(seq, k)
            if row is None or outcome.value not in CONTINUING:
                if outcome.value in TERMINAL:
                    break
                continue
            edge_members[(int(assignment[pid]), k + 2, row, outcome.value)].append(pid)
    for (g, t, row, col), pids in sorted(edge_members.items()):
        prev_maps = {p: _stage_conditions(series[p], t - 1) for p in pids if p in series}
        next_maps = {p: _stage_conditions(series[p], t) for p in pids if p in series}
        nets[g].annotations[(t, row, col)] = annotate_transition(pids, prev_maps, next_maps, top_m)
    return nets


def _stage_conditions(s: StageSeries, index: int) -> dict[str, Polarity]:
    for stage in s.stages:
        if stage.index == index:
            return stage.conditions
    return {}


# rendering ------------------------------------------------------------------


def color_bucket(p: float) -> str:
    """black p >= 0.5; red [0.3, 0.5); violet [0.1, 0.3); turquoise p < 0.1."""
    if p >= 0.5:
        return "black"
    if p >= 0.3:
        return "red"
    if p >= 0.1:
        return "violet"
    return "turquoise"


def node_id(stage: int, state: str) -> str:
    return f"stage{stage}:{state}"


def network_document(
    net: TransitionNetwork,
    names: Mapping[str, str] | None = None,
    min_support: int = 1,
) -> dict:
    """JSON-ready description of a network; edges below ``min_support`` are flagged, not dropped."""
    names = {} if names is None else names
    edges = []
    nodes = set()
    for t, m in net.matrices.items():
        for row in m.rows:
            nodes.add(node_id(t - 1, row))
    for t, row, col, count, p in net.edges():
        src, dst = node_id(t - 1, row), node_id(t, col)
        nodes.update((src, dst))
        edge = {
            "source": src,
            "target": dst,
            "stage": t,
            "count": count,
            "probability": round(p, 4),
            "color": color_bucket(p),
            "rendered": count >= min_support,
        }
        ann = net.annotations.get((t, row, col))
        if ann is not None and col in CONTINUING:
            edge["treated"] = [[c, names.get(c, c), round(f, 4)] for c, f in ann.treated]
            edge["emerging"] = [[c, names.get(c, c), round(f, 4)] for c, f in ann.emerging]
        edges.append(edge)

    def node_key(n: str):
        stage, state = n.split(":", 1)
        order = (START, *COLUMNS)
        return (int(stage[5:]), order.index(state) if state in order else len(order), state)

    return {
        "subgroup": net.subgroup,
        "min_support": min_support,
        "nodes": [{"id": n, "stage": int(n.split(":")[0][5:]), "state": n.split(":", 1)[1]} for n in sorted(nodes, key=node_key)],
        "edges": edges,
    }


def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _dot_from_document(doc: dict) -> str:
    lines = [f"digraph {_dot_quote('subgroup_' + str(doc['subgroup']))} {{", "  rankdir=LR;", "  node [shape=box];"]
    for node in doc["nodes"]:
        lines.append(f"  {_dot_quote(node['id'])};")
    for e in doc["edges"]:
        if not e["rendered"]:
            continue
        parts = [f"{e['probability']:.4f}"]
        for key in ("treated", "emerging"):
            if e.get(key):
                parts.append(f"{key}: " + ", ".join(f"{name} {f:.2f}" for _, name, f in e[key]))
        # Graphviz line breaks are a literal backslash-n inside the quoted label
        label = '"' + "\\n".join(_dot_quote(part)[1:-1] for part in parts) + '"'
        attrs = [
            f"label={label}",
            f"color={e['color']}",
            f"probability={e['probability']:.4f}",
            f"count={e['count']}",
        ]
        lines.append(f"  {_dot_quote(e['source'])} -> {_dot_quote(e['target'])} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_network(
    net: TransitionNetwork,
    fmt: str = "dot",
    names: Mapping[str, str] | None = None,
    min_support: int = 1,
) -> str:
    """Render one subgroup network as ``"dot"`` (Graphviz) or ``"json"`` text."""
    doc = network_document(net, names, min_support)
    if fmt == "json":
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt == "dot":
        return _dot_from_document(doc)
    raise ValueError(f"unsupported network format {fmt!r} (expected 'dot' or 'json')")


def sequences_to_dict(sequences: Mapping[str, Sequence[Outcome]]) -> dict[str, list[str]]:
    return {pid: [o.value for o in seq] for pid, seq in sorted(sequences.items())}


def sequences_from_dict(d: Mapping[str, Sequence[str]]) -> dict[str, list[Outcome]]:
    return {pid: [Outcome(v) for v in seq] for pid, seq in d.items()}
