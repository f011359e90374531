"""The twelve acceptance criteria, each with its tolerance and time limit.

Every test prints one ``PASS``/``FAIL`` line, and the module ends with a
summary block. Run on its own with ``pytest tests/test_acceptance.py -v``.
"""

import hashlib
import itertools
import json
import random
import time
from contextlib import contextmanager
from datetime import date, datetime, timezone
from pathlib import Path

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from helpers import ground_truth, pipeline_sequences
from oracles import (
    SCORES,
    brute_force_shapley,
    closed_form_bounds,
    dp_levenshtein,
    features_for,
    numeric_grad_check,
    random_tree,
    severity_oracle,
)
from sepsis_pathways.cli import load_config, main, run_command
from sepsis_pathways.corpus import ClinicalNote, NoteCategory
from sepsis_pathways.pathways import COLUMNS, color_bucket, estimate_transitions
from sepsis_pathways.severity import classify_severity
from sepsis_pathways.subgroups import ForestConfig, select_k, train_forest, tree_shap
from sepsis_pathways.synthcohort import planted_gaussians, rank2_ternary
from sepsis_pathways.textproc import Polarity, levenshtein, normalized_levenshtein, process_note
from sepsis_pathways.timeline import impute_series, stage_bounds
from sepsis_pathways.vectors import AutoencoderConfig, new_autoencoder, train_autoencoder

POS, NEG, U = Polarity.POSITIVE, Polarity.NEGATIVE, None
_SUMMARY: list[str] = []


def _emit(request, line: str) -> None:
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    if reporter is not None:
        reporter.ensure_newline()
        reporter.write_line(line)
    else:
        print(line)


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    _emit(request, "acceptance summary:")
    for line in _SUMMARY:
        _emit(request, "  " + line)


@pytest.fixture
def criterion(request):
    @contextmanager
    def run(number: int, title: str, limit: float):
        start = time.perf_counter()
        status, detail = "FAIL", ""
        try:
            yield
        except BaseException as exc:
            detail = f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
            raise
        else:
            if time.perf_counter() - start < limit:
                status = "PASS"
            else:
                detail = f"time limit {limit:g} s exceeded"
        finally:
            elapsed = time.perf_counter() - start
            line = f"{status} criterion {number:>2}: {title} [{elapsed:.2f} s / {limit:g} s]"
            if detail:
                line += f" - {detail}"
            _SUMMARY.append(line)
            _emit(request, line)
        assert status == "PASS", detail

    return run


@pytest.fixture(scope="module")
def cohort_dir(tmp_path_factory):
    """Shared output directory for the n=2000 planted cohort."""
    return tmp_path_factory.mktemp("cohort2000")


def _cohort_config():
    config = load_config(seed=0)
    config["synth"]["n_patients"] = 2000
    return config


def _ensure_steps(out: Path, steps) -> None:
    config = _cohort_config()
    for step in steps:
        if not (out / "manifests" / f"{step}.json").is_file():
            run_command(step, config, out)


def test_criterion_01_negex_fixture(criterion, res):
    with criterion(1, "NegEx worked sentence", 1.0):
        text = "The patient has shortness of breath but denies any chest pain"
        note = ClinicalNote("p", "n", NoteCategory.NURSING, datetime(2150, 1, 1, 9, tzinfo=timezone.utc), text)
        got = dict(process_note(note, date(2150, 1, 1), res).concepts)
        expected = {res.dictionary.normalize("shortness of breath"): POS, res.dictionary.normalize("chest pain"): NEG}
        assert got == expected
        names = res.dictionary.preferred_names
        assert {names[c].lower() for c in got} == {"dyspnea", "chest pain"}


def test_criterion_02_imputation(criterion):
    with criterion(2, "imputation truth table and idempotence", 5.0):
        table = [
            ([POS, U, POS], [POS, POS, POS]),
            ([NEG, U, NEG], [NEG, NEG, NEG]),
            ([POS, U, NEG], [POS, POS, NEG]),
            ([U, NEG, U, U], [U, NEG, NEG, NEG]),
            ([POS, NEG, U, U], [POS, NEG, NEG, NEG]),
            ([NEG, U, U, POS], [NEG, U, U, POS]),
        ]
        for series, expected in table:
            assert impute_series(series) == expected, series
        rng = random.Random(0)
        for _ in range(1000):
            series = [rng.choice([POS, NEG, U]) for _ in range(rng.randint(1, 30))]
            once = impute_series(series)
            assert impute_series(once) == once
            assert all(a is b for a, b in zip(series, once) if a is not None)


def test_criterion_03_segmentation(criterion):
    with criterion(3, "stage segmentation for LOS 2..30", 1.0):
        for los in range(2, 31):
            assert stage_bounds(los) == closed_form_bounds(los), los
        assert len(stage_bounds(30)) == 11


def test_criterion_04_levenshtein(criterion, res):
    with criterion(4, "Levenshtein vs DP oracle on 10,000 pairs; misspelling", 10.0):
        rng = random.Random(4)
        for i in range(10_000):
            alphabet = "ab" if i % 3 == 0 else "abcdefghij "
            hi = 90 if i % 100 == 0 else 16
            a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, hi)))
            b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, hi)))
            d = dp_levenshtein(a, b)
            assert levenshtein(a, b) == d
            assert normalized_levenshtein(a, b) == (d / max(len(a), len(b)) if a or b else 0.0)
        assert res.dictionary.threshold == 0.2
        assert res.dictionary.normalize("hemorrage") == res.dictionary.normalize("hemorrhage") == "X0000004"


def test_criterion_05_autoencoder(criterion):
    with criterion(5, "autoencoder gradient check and rank-2 training", 60.0):
        model = new_autoencoder(6, AutoencoderConfig(latent=2, hidden=[8], seed=3))
        assert model.sizes == [6, 8, 2, 8, 6]
        x = np.random.default_rng(5).integers(-1, 2, size=(3, 6)).astype(float)
        assert numeric_grad_check(model, x) <= 1e-4
        data = rank2_ternary(500, 64, seed=0).astype(float)
        trained = train_autoencoder(data, AutoencoderConfig(latent=8, epochs=200, seed=0))
        curve = trained.loss_curve
        assert len(curve) == 201
        assert min(curve) <= 0.5 * curve[0]


def test_criterion_06_clustering(criterion):
    with criterion(6, "planted 8-cluster recovery", 60.0):
        x, truth = planted_gaussians(2000, 8, 16, seed=0)
        report = select_k(x, range(2, 13), seed=0)
        assert report.best_k == 8, report.scores
        assert adjusted_rand_score(truth, report.clusterings[8].labels) >= 0.9


def test_criterion_07_treeshap(criterion):
    with criterion(7, "TreeSHAP vs brute-force Shapley; local accuracy", 30.0):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n_features = int(rng.integers(1, 11))
            tree = random_tree(rng, n_features, max_depth=3, n_classes=int(rng.integers(2, 4)))
            x = rng.random((2, n_features))
            fast = tree_shap(tree, x)
            for i in range(len(x)):
                phi, base = brute_force_shapley(tree, x[i])
                assert np.max(np.abs(fast.values[i] - phi)) <= 1e-9
                assert np.max(np.abs(fast.base - base)) <= 1e-9
        fixtures = [planted_gaussians(300, 4, 6, seed=1), (rank2_ternary(300, 20, seed=2).astype(float), None)]
        for x, y in fixtures:
            y = (x[:, 0] > 0).astype(int) + (x[:, 1] > 0).astype(int) if y is None else y
            forest = train_forest(x, y, ForestConfig(n_trees=25, seed=0))
            a = tree_shap(forest, x)
            assert np.max(np.abs(a.base + a.values.sum(axis=1) - forest.predict_proba(x))) <= 1e-9


def test_criterion_08_severity(criterion):
    with criterion(8, "severity truth table and monotonicity", 1.0):
        grid = list(itertools.product([False, True], [False, True], [False, True], [False, True], range(5), [False, True]))
        assert len(grid) == 160
        rank = {}
        for cell in grid:
            state = classify_severity(features_for(*cell)).value
            assert state == severity_oracle(*cell), cell
            rank[cell] = SCORES[state] or 0
        for cell in grid:
            for i in (0, 1, 2, 3, 5):
                if not cell[i]:
                    up = list(cell)
                    up[i] = True
                    assert rank[tuple(up)] >= rank[cell]
            if cell[4] < 4:
                up = list(cell)
                up[4] += 1
                assert rank[tuple(up)] >= rank[cell]


def test_criterion_09_transitions(criterion, cohort_dir):
    with criterion(9, "transition estimates vs planted matrices (n=2000)", 30.0):
        _ensure_steps(cohort_dir, ["synth", "ingest", "structure", "stages", "severity"])
        truth = ground_truth(cohort_dir)
        labels = {p["patient_id"]: p["cluster"] for p in truth["patients"]}
        mats = estimate_transitions(pipeline_sequences(cohort_dir), labels)
        checked = 0
        for (g, t), m in mats.items():
            for row, probs in m.probabilities().items():
                if probs:
                    assert abs(sum(probs.values()) - 1.0) <= 1e-9
                if m.row_total(row) < 50:
                    continue
                planted = truth["transitions"][str(g)][str(t)][row]
                for col in COLUMNS:
                    assert abs(probs.get(col, 0.0) - planted.get(col, 0.0)) <= 0.05, (g, t, row, col)
                checked += 1
        assert checked >= 8


def test_criterion_10_colors(criterion):
    with criterion(10, "edge color buckets", 1.0):
        ps = [0.0999, 0.1, 0.2999, 0.3, 0.4999, 0.5, 1.0]
        expected = ["turquoise", "violet", "violet", "red", "red", "black", "black"]
        assert [color_bucket(p) for p in ps] == expected


def test_criterion_11_prediction_ablation(criterion, cohort_dir):
    with criterion(11, "subgroup accuracy and subgroup-feature ablation", 120.0):
        _ensure_steps(cohort_dir, ["synth", "ingest", "structure", "stages", "severity", "vectors", "cluster", "pathways", "predict"])
        metrics = json.loads((cohort_dir / "predict" / "metrics.json").read_text("utf-8"))
        assert metrics["subgroup_classifier"]["accuracy"] >= 0.85
        with_acc = metrics["state_with_subgroup"]["accuracy"]
        without_acc = metrics["state_without_subgroup"]["accuracy"]
        assert with_acc >= without_acc - 0.02, (with_acc, without_acc)


def _digests(root: Path) -> dict[str, str]:
    return {
        p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_criterion_12_reproducibility(criterion, tmp_path):
    with criterion(12, "two `all` runs are byte-identical", 300.0):
        runs = []
        for name in ("first", "second"):
            out = tmp_path / name
            assert main(["synth", "--out", str(out)]) == 0
            assert main(["all", "--out", str(out)]) == 0
            runs.append(_digests(out))
        assert len(runs[0]) > 30
        assert runs[0] == runs[1]
