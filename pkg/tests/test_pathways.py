import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sepsis_pathways.corpus import Disposition, DispositionStatus
from sepsis_pathways.pathways import (
    COLUMNS,
    START,
    Outcome,
    annotate_transition,
    build_networks,
    color_bucket,
    estimate_transitions,
    export_network,
    heatmap_rows,
    label_outcome,
    label_transitions,
    network_document,
    sequences_from_dict,
    sequences_to_dict,
    stage2_distribution,
)
from sepsis_pathways.severity import SepsisState, SeverityTimeline
from sepsis_pathways.textproc.matching import Polarity
from sepsis_pathways.timeline import Stage, StageSeries

POS, NEG = Polarity.POSITIVE, Polarity.NEGATIVE
scores = st.one_of(st.none(), st.integers(1, 4))


@given(scores, scores)
def test_label_grid(prev, nxt):
    out = label_outcome(prev, nxt)
    if prev is None or nxt is None:
        assert out is Outcome.UNKNOWN
    else:
        expected = {-1: Outcome.IMPROVE, 0: Outcome.PERSISTENT, 1: Outcome.DETERIORATE}[int(np.sign(nxt - prev))]
        assert out is expected


@given(scores, scores, st.sampled_from(list(DispositionStatus)))
def test_last_boundary_takes_disposition(prev, nxt, status):
    out = label_outcome(prev, nxt, stay_ends=True, status=status)
    assert out.value == status.value


def test_label_transitions_of_timeline():
    states = [SepsisState.SEPSIS, SepsisState.SIRS, SepsisState.UNKNOWN, SepsisState.SEPTIC_SHOCK]
    disp = Disposition("p", DispositionStatus.DECEASE, 10)
    tl = SeverityTimeline("p", states, disp)
    assert label_transitions(tl) == [Outcome.IMPROVE, Outcome.UNKNOWN, Outcome.DECEASE]
    tl = SeverityTimeline("p", states, None)
    assert label_transitions(tl)[-1] is Outcome.UNKNOWN


def _count_oracle(sequences, assignment):
    """Tally (subgroup, stage, row, outcome) by walking consecutive pairs."""
    counts, unknown = Counter(), Counter()
    for pid, seq in sequences.items():
        prev = START
        for stage, out in enumerate(seq, start=2):
            if prev not in (START, "Improve", "Persistent", "Deteriorate"):
                prev = out.value
                continue
            if out is Outcome.UNKNOWN:
                unknown[(assignment[pid], stage, prev)] += 1
            else:
                counts[(assignment[pid], stage, prev, out.value)] += 1
            if out.value in ("Discharge", "Decease"):
                break
            prev = out.value
    return counts, unknown


continuing = st.sampled_from([Outcome.IMPROVE, Outcome.PERSISTENT, Outcome.DETERIORATE, Outcome.UNKNOWN])
sequence = st.tuples(st.lists(continuing, max_size=6), st.sampled_from([Outcome.DISCHARGE, Outcome.DECEASE, Outcome.UNKNOWN])).map(
    lambda t: t[0] + [t[1]]
)


@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=4), st.tuples(sequence, st.integers(0, 2)), max_size=25))
def test_counts_match_pairwise_oracle(data):
    sequences = {p: s for p, (s, _) in data.items()}
    assignment = {p: g for p, (_, g) in data.items()}
    mats = estimate_transitions(sequences, assignment)
    counts, unknown = _count_oracle(sequences, assignment)
    got_counts, got_unknown = Counter(), Counter()
    for (g, t), m in mats.items():
        for row, cols in m.counts.items():
            for col, k in cols.items():
                got_counts[(g, t, row, col)] += k
        for row, k in m.unknown.items():
            got_unknown[(g, t, row)] += k
        for row, probs in m.probabilities().items():
            if probs:
                assert abs(sum(probs.values()) - 1.0) <= 1e-9
                assert set(probs) <= set(COLUMNS)
    assert got_counts == counts and got_unknown == unknown


def test_unknown_excluded_from_denominator():
    seqs = {
        "a": [Outcome.IMPROVE, Outcome.DISCHARGE],
        "b": [Outcome.IMPROVE, Outcome.UNKNOWN],
        "c": [Outcome.IMPROVE, Outcome.DECEASE],
        "d": [Outcome.UNKNOWN, Outcome.DISCHARGE],
    }
    mats = estimate_transitions(seqs, dict.fromkeys(seqs, 0))
    m3 = mats[(0, 3)]
    assert m3.probabilities() == {"Improve": {"Discharge": 0.5, "Decease": 0.5}}
    assert m3.unknown == {"Improve": 1}
    assert mats[(0, 2)].probabilities()[START] == {"Improve": 1.0}


def test_all_unknown_row_is_empty():
    mats = estimate_transitions({"a": [Outcome.UNKNOWN]}, {"a": 0})
    assert mats[(0, 2)].probabilities() == {START: {}}
    assert mats[(0, 2)].to_dict()["rows"][START]["unknown"] == 1


def test_unassigned_patients_skipped():
    assert estimate_transitions({"a": [Outcome.IMPROVE]}, {}) == {}


@pytest.mark.parametrize(
    "p,color",
    [(0.0, "turquoise"), (0.0999, "turquoise"), (0.1, "violet"), (0.2999, "violet"), (0.3, "red"), (0.4999, "red"), (0.5, "black"), (1.0, "black")],
)
def test_color_buckets(p, color):
    assert color_bucket(p) == color


def test_stage2_distribution_and_heatmap():
    seqs = {"a": [Outcome.IMPROVE], "b": [Outcome.DETERIORATE], "c": [Outcome.UNKNOWN], "d": [Outcome.IMPROVE]}
    assign = {"a": 0, "b": 0, "c": 1, "d": 0}
    dist = stage2_distribution(seqs, assign, subgroups=[0, 1, 2])
    assert dist[0] == pytest.approx({"Improve": 2 / 3, "Deteriorate": 1 / 3})
    assert dist[1] == {} and dist[2] == {}
    header, rows = heatmap_rows(dist)
    assert header == ["subgroup", *COLUMNS]
    assert rows[0][2] == "0.6667" and rows[1][1:] == [""] * len(COLUMNS)


def test_annotation_treated_and_emerging():
    prev = {"a": {"X1": POS, "X2": NEG}, "b": {"X1": POS}}
    nxt = {"a": {"X1": NEG, "X2": POS}, "b": {"X1": POS, "X3": POS}}
    ann = annotate_transition(["a", "b"], prev, nxt, top_m=2)
    assert ann.treated == (("X1", 0.5),)
    assert ann.emerging == (("X2", 0.5), ("X3", 0.5))
    assert annotate_transition([], {}, {}).treated == ()


def _series(pid, maps):
    stages = [Stage(k, k, k, m) for k, m in enumerate(maps, start=1)]
    return StageSeries(pid, stages, None, len(maps))


def _toy_networks():
    series = {
        "a": _series("a", [{"X1": POS}, {"X1": NEG}, {}]),
        "b": _series("b", [{"X1": POS}, {"X2": POS}, {}]),
        "c": _series("c", [{}, {"X2": POS}, {}]),
    }
    seqs = {
        "a": [Outcome.IMPROVE, Outcome.DISCHARGE],
        "b": [Outcome.DETERIORATE, Outcome.DECEASE],
        "c": [Outcome.IMPROVE, Outcome.DISCHARGE],
    }
    return build_networks(series, seqs, {"a": 0, "b": 0, "c": 1}, top_m=2), seqs


def test_network_annotations_and_edges():
    nets, _ = _toy_networks()
    assert set(nets) == {0, 1}
    net = nets[0]
    assert net.annotations[(2, START, "Improve")].treated == (("X1", 1.0),)
    assert net.annotations[(2, START, "Deteriorate")].emerging == (("X2", 1.0),)
    assert not any(col in ("Discharge", "Decease") for (_, _, col) in net.annotations)
    assert (2, START, "Improve", 1, 0.5) in net.edges()


def test_export_dot_and_json():
    nets, _ = _toy_networks()
    dot = export_network(nets[0], "dot", names={"X1": "Fever"})
    assert dot.startswith('digraph "subgroup_0" {')
    assert '"stage1:Start" -> "stage2:Improve"' in dot
    assert "color=black" in dot and "treated: Fever 1.00" in dot
    doc = json.loads(export_network(nets[0], "json"))
    assert doc == network_document(nets[0])
    assert {e["color"] for e in doc["edges"]} <= {"black", "red", "violet", "turquoise"}
    with pytest.raises(ValueError):
        export_network(nets[0], "svg")


def test_min_support_flags_edges():
    nets, _ = _toy_networks()
    doc = network_document(nets[0], min_support=2)
    assert doc["edges"] and not any(e["rendered"] for e in doc["edges"])
    assert "->" not in export_network(nets[0], "dot", min_support=2)


def test_empty_network_exports():
    from sepsis_pathways.pathways import TransitionNetwork

    net = TransitionNetwork(5)
    assert json.loads(export_network(net, "json"))["edges"] == []
    assert export_network(net, "dot").strip().endswith("}")


def test_sequences_roundtrip():
    _, seqs = _toy_networks()
    assert sequences_from_dict(json.loads(json.dumps(sequences_to_dict(seqs)))) == seqs
