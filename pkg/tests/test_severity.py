import itertools
from datetime import date, datetime

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import SCORES, features_for, severity_oracle
from sepsis_pathways.corpus import VitalsRecord
from sepsis_pathways.severity import (
    FLAG_NAMES,
    FlagConfig,
    SepsisState,
    SeverityThresholds,
    StageClinicalFeatures,
    aggregate_vitals,
    classify_severity,
    severity_timeline,
    sirs_count,
)
from sepsis_pathways.textproc.matching import Polarity
from sepsis_pathways.timeline import DailyConditionMap, segment_stages

GRID = list(itertools.product([False, True], [False, True], [False, True], [False, True], range(5), [False, True]))


def test_scores_and_names():
    assert [s.score for s in SepsisState] == [1, 2, 3, 4, None]
    assert SepsisState.from_score(3) is SepsisState.SEVERE_SEPSIS
    assert SepsisState.from_score(None) is SepsisState.UNKNOWN
    with pytest.raises(ValueError):
        SepsisState.from_score(7)


@pytest.mark.parametrize("cell", GRID)
def test_ladder_matches_truth_table(cell):
    assert classify_severity(features_for(*cell)).value == severity_oracle(*cell)


def _rank(state: str) -> int:
    return SCORES[state] or 0


def test_single_criterion_increments_never_lower_severity():
    for cell in GRID:
        here = _rank(classify_severity(features_for(*cell)).value)
        for i in (0, 1, 2, 3, 5):
            if not cell[i]:
                bumped = list(cell)
                bumped[i] = True
                assert _rank(classify_severity(features_for(*bumped)).value) >= here, (cell, i)
        if cell[4] < 4:
            bumped = list(cell)
            bumped[4] += 1
            assert _rank(classify_severity(features_for(*bumped)).value) >= here


def test_sirs_count_thresholds_are_strict():
    f = StageClinicalFeatures(max_temp=38.0, max_heart_rate=90.0, max_resp_rate=20.0, max_wbc=12.0, min_wbc=4.0)
    assert sirs_count(f) == 0
    f = StageClinicalFeatures(max_temp=38.1, min_temp=35.9, max_heart_rate=91, max_resp_rate=21, min_wbc=3.9)
    assert sirs_count(f) == 4
    assert sirs_count(StageClinicalFeatures()) is None


def test_custom_thresholds():
    f = StageClinicalFeatures(max_heart_rate=85.0, max_resp_rate=18.0)
    assert sirs_count(f) == 0
    assert sirs_count(f, SeverityThresholds(heart_rate=80, resp_rate=15)) == 2
    with pytest.raises(ValueError):
        SeverityThresholds.from_dict({"lactate": 2})


def test_no_vitals_and_no_flags_is_unknown():
    assert classify_severity(StageClinicalFeatures()) is SepsisState.UNKNOWN


def test_flags_only_from_positive_mentions():
    flags = FlagConfig.from_dict({"infection_suspected": ["X1"], "iv_fluids_given": ["X2"]})
    out = flags.flags_for({"X1": Polarity.POSITIVE, "X2": Polarity.NEGATIVE})
    assert out == {"infection_suspected": True, "organ_dysfunction": False, "hypotension_documented": False, "iv_fluids_given": False}
    with pytest.raises(ValueError):
        FlagConfig.from_dict({"bogus": []})
    assert set(FlagConfig.default().to_dict()) == set(FLAG_NAMES)


@given(st.lists(st.floats(30, 45, allow_nan=False), min_size=1, max_size=10))
def test_aggregates_are_worst_case(temps):
    recs = [VitalsRecord("p", datetime(2020, 1, 1, i % 24), "temp_c", t) for i, t in enumerate(temps)]
    agg = aggregate_vitals(recs)
    assert agg["max_temp"] == max(temps) and agg["min_temp"] == min(temps)
    assert agg["max_heart_rate"] is None


def _series():
    days = [{"X1": Polarity.POSITIVE}, {}, {}, {}, {}]
    return segment_stages(DailyConditionMap("p1", days), None)


def test_timeline_places_vitals_by_stage():
    series = _series()
    anchor = date(2020, 1, 1)
    vitals = [
        VitalsRecord("p1", datetime(2020, 1, 1, 8), "temp_c", 39.0),
        VitalsRecord("p1", datetime(2020, 1, 2, 8), "heart_rate", 120.0),
        VitalsRecord("p1", datetime(2020, 1, 4, 8), "heart_rate", 120.0),
    ]
    flags = FlagConfig.from_dict({"infection_suspected": ["X1"]})
    tl = severity_timeline(series, vitals, anchor, flags)
    assert [s.value for s in tl.states] == ["Sepsis", "Unknown", "Unknown"]
    assert tl.to_rows()[0] == ("p1", 1, "Sepsis", 2)
    assert tl.to_rows()[1][3] == ""
