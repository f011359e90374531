import hashlib
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from sepsis_pathways import _io
from sepsis_pathways.cli import COMMANDS, DEFAULT_CONFIG, STEPS, config_hash, load_config, main, validate_config

SMALL = {
    "synth": {"n_patients": 120, "n_clusters": 3},
    "vectors": {"epochs": 10, "latent": 8},
    "cluster": {"k_max": 5, "n_init": 2},
    "explain": {"n_trees": 10},
    "predict": {"n_trees": 10, "epochs": 20, "hidden": 16},
}


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    path.write_text(json.dumps(SMALL))
    return path


@pytest.fixture(scope="module")
def full_run(tmp_path_factory, small_config):
    out = tmp_path_factory.mktemp("run")
    assert main(["synth", "--config", str(small_config), "--out", str(out)]) == 0
    assert main(["all", "--config", str(small_config), "--out", str(out)]) == 0
    return out


def _digests(root: Path) -> dict[str, str]:
    return {
        p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


EXPECTED = [
    "ingest/patients.jsonl",
    "ingest/excluded.csv",
    "ingest/rejects.csv",
    "ingest/cohort_summary.json",
    "structure/structured_notes.jsonl",
    "stages/stages.jsonl",
    "vectors/vocabulary.json",
    "vectors/ternary.tsv",
    "vectors/dense.csv",
    "vectors/autoencoder.json",
    "cluster/clusters.csv",
    "cluster/silhouette.csv",
    "explain/forest.json",
    "explain/shap_summary.json",
    "explain/misclassified.json",
    "severity/severity.csv",
    "pathways/transitions.json",
    "pathways/stage2_heatmap.csv",
    "pathways/subgroup_0/network.dot",
    "pathways/subgroup_0/network.json",
    "predict/metrics.json",
    "predict/predictions.csv",
    "manifests/all.json",
]


@pytest.mark.parametrize("name", EXPECTED)
def test_all_writes_artifact(full_run, name):
    assert (full_run / name).is_file()


def test_manifest_records_hashes(full_run):
    m = json.loads((full_run / "manifests" / "cluster.json").read_text())
    assert m["subcommand"] == "cluster" and m["seed"] == 0
    assert m["config_sha256"] == config_hash(m["config"])
    assert set(m["versions"]) >= {"python", "numpy"}
    for rel, digest in {**m["inputs"], **m["outputs"]}.items():
        assert hashlib.sha256((full_run / rel).read_bytes()).hexdigest() == digest
    assert "vectors/dense.csv" in m["inputs"] and "cluster/clusters.csv" in m["outputs"]


def test_metrics_document(full_run):
    metrics = json.loads((full_run / "predict" / "metrics.json").read_text())
    assert {"subgroup_classifier", "state_with_subgroup", "state_without_subgroup"} <= set(metrics)
    for key in ("accuracy", "precision", "recall", "confusion", "n_train", "n_test", "seed"):
        assert key in metrics["subgroup_classifier"]


def test_reruns_are_byte_identical(tmp_path, small_config, full_run):
    out = tmp_path / "again"
    assert main(["synth", "--config", str(small_config), "--out", str(out)]) == 0
    assert main(["all", "--config", str(small_config), "--out", str(out)]) == 0
    assert _digests(out) == _digests(full_run)


def test_missing_upstream_names_producer(tmp_path, capsys):
    assert main(["cluster", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "dense.csv" in err and "run `vectors` first" in err


def test_missing_raw_inputs(tmp_path, capsys):
    assert main(["ingest", "--out", str(tmp_path)]) == 2
    assert "run `synth` first" in capsys.readouterr().err


def test_bad_config_exit_one_with_report(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"vectors": {"epochs": -1}, "bogus": 1}))
    assert main(["all", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "vectors/epochs" in err and "bogus" in err
    # cross-field checks run once the schema passes
    cfg.write_text(json.dumps({"cluster": {"k_min": 9, "k_max": 3}}))
    assert main(["all", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "k_min" in capsys.readouterr().err


def test_invalid_subcommand_exits_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_no_subcommand_is_an_error(capsys):
    assert main([]) == 1


def test_print_config(capsys):
    assert main(["--print-config", "--seed", "7"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["seed"] == 7 and cfg["textproc"]["threshold"] == 0.2


def test_defaults_validate_and_merge(tmp_path):
    assert validate_config(DEFAULT_CONFIG) == []
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"pathways": {"top_m": 4}}))
    cfg = load_config(str(path))
    assert cfg["pathways"] == {"top_m": 4, "min_support": 1}
    assert set(STEPS) < set(COMMANDS)


def test_external_state_input_requires_path():
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    cfg["predict"]["state_input"] = "external"
    assert any("external" in e for e in validate_config(cfg))


def test_atomic_write_leaves_old_file_on_failure(tmp_path, monkeypatch):
    target = tmp_path / "x.json"
    _io.write_json(target, {"a": 1})

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        _io.write_json(target, {"a": 2})
    assert json.loads(target.read_text()) == {"a": 1}
    assert [p.name for p in tmp_path.iterdir()] == ["x.json"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "sepsis_pathways", "--print-config"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["seed"] == 0
