"""Command-line pipeline: ingest -> structure -> stages -> vectors -> cluster ->
explain -> severity -> pathways -> predict, plus ``synth`` and ``all``.

Every subcommand reads its upstream artifacts from the output directory,
writes its own outputs atomically and records a manifest (config hash,
seed, library versions, input and output digests) under ``manifests/``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import platform
import sys
from collections import Counter
from dataclasses import dataclass, field
from datetime import date
from importlib import metadata, resources
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from . import corpus as corpus_mod
from ._io import atomic_write_text, dumps_json, read_json, read_jsonl, sha256_file, write_csv, write_json, write_jsonl
from .pathways import (
    build_networks,
    export_network,
    heatmap_rows,
    label_transitions,
    sequences_from_dict,
    sequences_to_dict,
    stage2_distribution,
)
from .predict import (
    STATE_CLASSES,
    StateClassifierConfig,
    load_external_features,
    predict_pathway,
    stage2_task,
    state_ablation,
    train_subgroup_classifier,
)
from .severity import FlagConfig, SepsisState, SeverityThresholds, SeverityTimeline, features_to_dict, severity_timeline
from .subgroups import ForestConfig, explain_subgroups, misclassified_patients, select_k, shap_summary, train_forest, tree_shap
from .synthcohort import GeneratorConfig, InfeasibleConfigError, generate_cohort
from .textproc import ConceptDictionary, ConceptLexicon, NegationTriggerSet, TextResources, process_note
from .textproc.notes import StructuredNote, load_annotations, mentions_from_annotations
from .timeline import ShortStayError, build_stage_series, disposition_from_dict, stage_series_from_records
from .vectors import AutoencoderConfig, ConceptVocabulary, build_ternary_vector, build_vocabulary, encode, from_sparse, to_sparse, train_autoencoder

logger = logging.getLogger(__name__)

STEPS = ("ingest", "structure", "stages", "vectors", "cluster", "explain", "severity", "pathways", "predict")
COMMANDS = (*STEPS, "synth", "all")

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "paths": {
        # null inputs default to the files written by `synth` under <out>/synth/
        "notes": None,
        "vitals": None,
        "demographics": None,
        "annotations": None,
        "lexicon": None,
        "negation_triggers": None,
        "concept_dictionary": None,
        "decease_patterns": None,
        "flags": None,
        "external_features": None,
    },
    "corpus": {"min_note_day_coverage": 0.0},
    "textproc": {"threshold": 0.2, "window": 6},
    "vectors": {
        "latent": 16,
        "hidden": None,
        "activation": "tanh",
        "epochs": 100,
        "learning_rate": 0.001,
        "batch_size": 32,
        "optimizer": "adam",
    },
    "cluster": {"input": "dense", "k_min": 2, "k_max": 12, "n_init": 10},
    "explain": {"n_trees": 100, "max_depth": 12, "min_leaf": 2, "feature_subsample": "sqrt", "top_m": 5},
    "severity": {"thresholds": {}},
    "pathways": {"top_m": 2, "min_support": 1},
    "predict": {
        "subgroup_model": "random_forest",
        "n_trees": 100,
        "max_depth": 12,
        "min_leaf": 2,
        "feature_subsample": "sqrt",
        "test_size": 0.2,
        "state_input": "ternary",
        "hidden": 64,
        "activation": "tanh",
        "epochs": 200,
        "learning_rate": 0.001,
        "batch_size": 32,
    },
    "synth": {
        "n_patients": 500,
        "n_clusters": 8,
        "signature_positive": 3,
        "signature_negative": 1,
        "signature_prevalence": 0.95,
        "background_prevalence": 0.03,
        "local_concept_rate": 0.02,
        "max_stages": 5,
        "missing_note_rate": 0.15,
        "misspelling_rate": 0.05,
        "bad_vitals_rate": 0.005,
        "sampling": "stratified",
    },
}

_PROB = {"type": "number", "minimum": 0, "maximum": 1}
_POS_INT = {"type": "integer", "minimum": 1}
_OPT_PATH = {"type": ["string", "null"]}
_SUBSAMPLE = {"anyOf": [{"enum": ["sqrt", "log2", None]}, {"type": "integer", "minimum": 1}, {"type": "number", "exclusiveMinimum": 0, "maximum": 1}]}
_ACT = {"enum": ["tanh", "relu", "sigmoid", "linear"]}


def _obj(props: dict, required: bool = False) -> dict:
    out = {"type": "object", "properties": props, "additionalProperties": False}
    if required:
        out["required"] = sorted(props)
    return out


CONFIG_SCHEMA: dict = _obj(
    {
        "seed": {"type": "integer", "minimum": 0},
        "paths": _obj({k: _OPT_PATH for k in DEFAULT_CONFIG["paths"]}),
        "corpus": _obj({"min_note_day_coverage": _PROB}),
        "textproc": _obj({"threshold": _PROB, "window": _POS_INT}),
        "vectors": _obj(
            {
                "latent": _POS_INT,
                "hidden": {"anyOf": [{"type": "null"}, {"type": "array", "items": _POS_INT}]},
                "activation": _ACT,
                "epochs": {"type": "integer", "minimum": 0},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "batch_size": _POS_INT,
                "optimizer": {"enum": ["adam", "sgd"]},
            }
        ),
        "cluster": _obj(
            {
                "input": {"enum": ["dense", "ternary"]},
                "k_min": {"type": "integer", "minimum": 2},
                "k_max": {"type": "integer", "minimum": 2},
                "n_init": _POS_INT,
            }
        ),
        "explain": _obj(
            {
                "n_trees": _POS_INT,
                "max_depth": _POS_INT,
                "min_leaf": _POS_INT,
                "feature_subsample": _SUBSAMPLE,
                "top_m": _POS_INT,
            }
        ),
        "severity": _obj(
            {"thresholds": _obj({k: {"type": "number"} for k in SeverityThresholds.__dataclass_fields__})}
        ),
        "pathways": _obj({"top_m": _POS_INT, "min_support": _POS_INT}),
        "predict": _obj(
            {
                "subgroup_model": {"enum": ["decision_tree", "random_forest"]},
                "n_trees": _POS_INT,
                "max_depth": _POS_INT,
                "min_leaf": _POS_INT,
                "feature_subsample": _SUBSAMPLE,
                "test_size": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "state_input": {"enum": ["ternary", "dense", "external"]},
                "hidden": _POS_INT,
                "activation": _ACT,
                "epochs": {"type": "integer", "minimum": 0},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "batch_size": _POS_INT,
            }
        ),
        "synth": _obj(
            {
                "n_patients": _POS_INT,
                "n_clusters": _POS_INT,
                "signature_positive": {"type": "integer", "minimum": 0},
                "signature_negative": {"type": "integer", "minimum": 0},
                "signature_prevalence": _PROB,
                "background_prevalence": _PROB,
                "local_concept_rate": _PROB,
                "max_stages": {"type": "integer", "minimum": 2, "maximum": 5},
                "missing_note_rate": _PROB,
                "misspelling_rate": _PROB,
                "bad_vitals_rate": _PROB,
                "sampling": {"enum": ["stratified", "iid"]},
                "prevalence": {"type": ["array", "null"], "items": {"type": "object", "additionalProperties": _PROB}},
                "transitions": {"type": ["object", "null"]},
                "extra_day_probs": {"type": "array", "items": _PROB, "minItems": 3, "maxItems": 3},
            }
        ),
    }
)


class ConfigError(Exception):
    """Invalid configuration or usage (exit status 1)."""


class DataError(Exception):
    """Bad or missing input data (exit status 2)."""


class MissingArtifactError(DataError):
    def __init__(self, path: Path, producer: str):
        super().__init__(f"missing {path}: run `{producer}` first")
        self.path = path
        self.producer = producer


# config ---------------------------------------------------------------------


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("thresholds", "transitions"):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_config(config: dict) -> list[str]:
    """Every schema and cross-field problem, as readable lines (empty when valid)."""
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    problems = []
    for err in sorted(validator.iter_errors(config), key=lambda e: [str(p) for p in e.absolute_path]):
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        problems.append(f"{where}: {err.message}")
    if problems:
        return problems
    c = config["cluster"]
    if c["k_min"] > c["k_max"]:
        problems.append(f"cluster: k_min ({c['k_min']}) exceeds k_max ({c['k_max']})")
    for key, path in config["paths"].items():
        if path is not None and not Path(path).exists():
            problems.append(f"paths/{key}: file not found: {path}")
    if config["predict"]["state_input"] == "external" and config["paths"]["external_features"] is None:
        problems.append("predict/state_input: 'external' requires paths/external_features")
    try:
        GeneratorConfig.from_dict({**config["synth"], "seed": config["seed"]}).validate()
    except (InfeasibleConfigError, TypeError, ValueError) as exc:
        problems.append(f"synth: {exc}")
    return problems


def load_config(path: str | None = None, seed: int | None = None) -> dict:
    """Defaults, overlaid with the JSON file at ``path`` and then ``seed``.

    Raises:
        ConfigError: unreadable file or a validation report.
    """
    user: dict = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
    config = _deep_merge(DEFAULT_CONFIG, user)
    if seed is not None:
        config["seed"] = seed
    problems = validate_config(config)
    if problems:
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems))
    return config


def config_hash(config: dict) -> str:
    return hashlib.sha256(dumps_json(config).encode("utf-8")).hexdigest()


# run context ----------------------------------------------------------------


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "scikit-learn", "jsonschema"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


@dataclass
class Run:
    config: dict
    out: Path
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return int(self.config["seed"])

    def rel(self, path: Path) -> str:
        try:
            return Path(path).resolve().relative_to(self.out.resolve()).as_posix()
        except ValueError:
            return str(path)

    def artifact(self, step: str, name: str) -> Path:
        return self.out / step / name

    def need(self, path: Path, producer: str) -> Path:
        """Check an upstream file exists and record its digest."""
        path = Path(path)
        if not path.is_file():
            raise MissingArtifactError(path, producer)
        self.inputs[self.rel(path)] = sha256_file(path)
        return path

    def input_path(self, key: str, default_name: str | None, required: bool = True) -> Path | None:
        """A raw input: the configured path, else ``<out>/synth/<default_name>``."""
        given = self.config["paths"][key]
        if given is not None:
            return self.need(Path(given), "synth")
        if default_name is None:
            return None
        path = self.out / "synth" / default_name
        if path.is_file():
            return self.need(path, "synth")
        if required:
            raise MissingArtifactError(path, "synth")
        return None

    def wrote(self, path: Path) -> None:
        self.outputs[self.rel(path)] = sha256_file(path)

    def json(self, path: Path, obj) -> None:
        write_json(path, obj)
        self.wrote(path)

    def jsonl(self, path: Path, rows) -> None:
        write_jsonl(path, rows)
        self.wrote(path)

    def csv(self, path: Path, header, rows) -> None:
        write_csv(path, header, rows)
        self.wrote(path)

    def text(self, path: Path, text: str) -> None:
        atomic_write_text(path, text)
        self.wrote(path)

    def manifest(self, command: str) -> dict:
        return {
            "subcommand": command,
            "config_sha256": config_hash(self.config),
            "config": self.config,
            "seed": self.seed,
            "versions": _versions(),
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
        }

    def write_manifest(self, command: str) -> Path:
        path = self.out / "manifests" / f"{command}.json"
        write_json(path, self.manifest(command))
        return path


# shared loaders ---------------------------------------------------------------


def _text_resources(run: Run) -> TextResources:
    p = run.config["paths"]
    t = run.config["textproc"]
    pkg = resources.files("sepsis_pathways.resources")

    def text_of(key, name):
        if p[key] is not None:
            return run.need(Path(p[key]), "synth").read_text("utf-8")
        return pkg.joinpath(name).read_text("utf-8")

    return TextResources(
        ConceptLexicon.from_text(text_of("lexicon", "lexicon.tsv")),
        NegationTriggerSet.from_text(text_of("negation_triggers", "negation_triggers.tsv")),
        ConceptDictionary.from_text(text_of("concept_dictionary", "concept_dictionary.tsv"), t["threshold"]),
        t["window"],
    )


def _load_notes(run: Run):
    path = run.input_path("notes", "notes.jsonl")
    notes, rejects = corpus_mod.load_notes(path)
    return notes, rejects


def _load_vitals(run: Run):
    path = run.input_path("vitals", "vitals.csv")
    return corpus_mod.load_vitals(path)


def _load_patients(run: Run) -> dict[str, dict]:
    rows = read_jsonl(run.need(run.artifact("ingest", "patients.jsonl"), "ingest"))
    return {r["patient_id"]: r for r in rows}


def _load_series(run: Run, patients: dict[str, dict]):
    rows = read_jsonl(run.need(run.artifact("stages", "stages.jsonl"), "stages"))
    grouped: dict[str, list[dict]] = {}
    for r in rows:
        grouped.setdefault(r["patient_id"], []).append(r)
    return {
        pid: stage_series_from_records(recs, disposition_from_dict(patients.get(pid, {}).get("disposition")))
        for pid, recs in sorted(grouped.items())
    }


def _load_ternary(run: Run):
    vocab = ConceptVocabulary.from_json(read_json(run.need(run.artifact("vectors", "vocabulary.json"), "vectors")))
    rows = []
    path = run.need(run.artifact("vectors", "ternary.tsv"), "vectors")
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            pid, stage, entries = (line.rstrip("\n").split("\t") + [""])[:3]
            rows.append((pid, int(stage), from_sparse(entries, len(vocab))))
    return vocab, rows


def _stage1_ternary(run: Run):
    vocab, rows = _load_ternary(run)
    stage1 = [(pid, v) for pid, stage, v in rows if stage == 1]
    ids = [pid for pid, _ in stage1]
    x = np.array([v for _, v in stage1], dtype=float).reshape(len(stage1), len(vocab))
    return vocab, ids, x


def _load_dense(run: Run, stage: int = 1):
    path = run.need(run.artifact("vectors", "dense.csv"), "vectors")
    ids, rows = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if int(row[1]) == stage:
                ids.append(row[0])
                rows.append([float(v) for v in row[2:]])
    return ids, np.asarray(rows, dtype=float)


def _load_clusters(run: Run) -> dict[str, int]:
    path = run.need(run.artifact("cluster", "clusters.csv"), "cluster")
    with open(path, encoding="utf-8", newline="") as fh:
        return {r["patient_id"]: int(r["cluster"]) for r in csv.DictReader(fh)}


def _names(run: Run) -> dict[str, str]:
    res = _text_resources(run)
    return dict(res.dictionary.preferred_names)


def _fmt(v: float) -> str:
    return repr(float(v))


# steps ------------------------------------------------------------------------


def cmd_synth(run: Run) -> None:
    cfg = GeneratorConfig.from_dict({**run.config["synth"], "seed": run.seed})
    cohort = generate_cohort(cfg)
    for path in cohort.write(run.out / "synth").values():
        run.wrote(path)
    logger.info("synth: %d patients, %d notes", cfg.n_patients, len(cohort.notes))


def cmd_ingest(run: Run) -> None:
    notes, rejects = _load_notes(run)
    vitals, vrejects = _load_vitals(run)
    rejects = rejects + vrejects
    demo_path = run.input_path("demographics", "demographics.jsonl", required=False)
    demographics = {}
    if demo_path is not None:
        demographics, drejects = corpus_mod.load_demographics(demo_path)
        rejects += drejects
    decease = None
    if run.config["paths"]["decease_patterns"] is not None:
        decease = corpus_mod.load_decease_patterns(run.input_path("decease_patterns", None))
    min_cov = run.config["corpus"]["min_note_day_coverage"]
    included, excluded, infos = [], [], []
    for pid in sorted(set(notes) | set(vitals)):
        ns, vs = notes.get(pid, []), vitals.get(pid, [])
        if not ns:
            excluded.append((pid, "no notes"))
            continue
        anchor = corpus_mod.admission_anchor(ns, vs)
        disp = corpus_mod.find_disposition(ns, anchor, decease)
        if disp is not None:
            los = disp.discharge_day
        else:
            days = [corpus_mod.day_index(n.chart_time, anchor) for n in ns]
            los = max(days)
        if los < 2:
            excluded.append((pid, f"length of stay {los} < 2 days"))
            continue
        coverage = corpus_mod.note_day_coverage(ns, anchor, los)
        if coverage < min_cov:
            excluded.append((pid, f"note coverage {coverage:.3f} < {min_cov}"))
            continue
        demo = demographics.get(pid)
        included.append(
            {
                "patient_id": pid,
                "anchor": anchor.isoformat(),
                "los": los,
                "note_day_coverage": round(coverage, 6),
                "disposition": None
                if disp is None
                else {"patient_id": pid, "status": disp.status.value, "discharge_day": disp.discharge_day},
                "sex": demo.sex if demo else None,
                "age_years": demo.age_years if demo else None,
            }
        )
        infos.append(corpus_mod.PatientInfo(pid, demo.sex if demo else None, demo.age_years if demo else None, los))
    if not included:
        raise DataError("no patient passed ingestion")
    run.jsonl(run.artifact("ingest", "patients.jsonl"), included)
    run.csv(run.artifact("ingest", "excluded.csv"), ["patient_id", "reason"], excluded)
    run.csv(run.artifact("ingest", "rejects.csv"), ["source", "line", "reason"], [(r.source, r.line, r.reason) for r in rejects])
    run.json(run.artifact("ingest", "cohort_summary.json"), corpus_mod.cohort_stats(infos).to_dict())
    if excluded:
        logger.warning("ingest: %d patient(s) excluded (see ingest/excluded.csv)", len(excluded))


def cmd_structure(run: Run) -> None:
    patients = _load_patients(run)
    notes, _ = _load_notes(run)
    res = _text_resources(run)
    annotations = {}
    ann_path = run.input_path("annotations", None, required=False)
    if ann_path is not None:
        annotations = load_annotations(ann_path)
    rows = []
    for pid in sorted(patients):
        anchor = date.fromisoformat(patients[pid]["anchor"])
        for note in notes.get(pid, []):
            if note.category is corpus_mod.NoteCategory.DISCHARGE_SUMMARY:
                continue
            mentions = None
            if note.note_id in annotations:
                try:
                    mentions = mentions_from_annotations(note.text, annotations[note.note_id])
                except ValueError as exc:
                    raise DataError(f"annotations for note {note.note_id}: {exc}") from None
            rows.append(process_note(note, anchor, res, mentions).to_dict())
    run.jsonl(run.artifact("structure", "structured_notes.jsonl"), rows)


def cmd_stages(run: Run) -> None:
    patients = _load_patients(run)
    rows = read_jsonl(run.need(run.artifact("structure", "structured_notes.jsonl"), "structure"))
    by_patient: dict[str, list[StructuredNote]] = {}
    for r in rows:
        by_patient.setdefault(r["patient_id"], []).append(StructuredNote.from_dict(r))
    out = []
    for pid in sorted(patients):
        p = patients[pid]
        try:
            series = build_stage_series(pid, by_patient.get(pid, []), p["los"], disposition_from_dict(p["disposition"]))
        except ShortStayError as exc:
            logger.warning("stages: %s skipped: %s", pid, exc)
            continue
        out.extend(series.to_records())
    run.jsonl(run.artifact("stages", "stages.jsonl"), out)


def cmd_vectors(run: Run) -> None:
    patients = _load_patients(run)
    series = _load_series(run, patients)
    vocab = build_vocabulary(series.values())
    keys, vecs = [], []
    for pid, s in series.items():
        for stage in s.stages:
            keys.append((pid, stage.index))
            vecs.append(build_ternary_vector(stage.conditions, vocab))
    x = np.array(vecs, dtype=float)
    v = run.config["vectors"]
    latent = v["latent"]
    if latent > len(vocab):
        raise DataError(f"vectors: latent size {latent} exceeds vocabulary size {len(vocab)}")
    cfg = AutoencoderConfig(
        latent=latent,
        hidden=v["hidden"],
        activation=v["activation"],
        epochs=v["epochs"],
        learning_rate=v["learning_rate"],
        batch_size=v["batch_size"],
        seed=run.seed,
        optimizer=v["optimizer"],
    )
    model = train_autoencoder(x, cfg)
    z = encode(model, x)
    run.json(run.artifact("vectors", "vocabulary.json"), vocab.to_json())
    run.text(
        run.artifact("vectors", "ternary.tsv"),
        "patient_id\tstage\tentries\n" + "".join(f"{pid}\t{k}\t{to_sparse(vec)}\n" for (pid, k), vec in zip(keys, vecs)),
    )
    run.csv(
        run.artifact("vectors", "dense.csv"),
        ["patient_id", "stage", *[f"v{i + 1}" for i in range(model.latent)]],
        [[pid, k, *map(_fmt, row)] for (pid, k), row in zip(keys, z)],
    )
    run.json(run.artifact("vectors", "autoencoder.json"), model.to_json())


def cmd_cluster(run: Run) -> None:
    c = run.config["cluster"]
    if c["input"] == "dense":
        ids, x = _load_dense(run, 1)
    else:
        _, ids, x = _stage1_ternary(run)
    k_max = min(c["k_max"], len(ids) - 1)
    if k_max < c["k_min"]:
        raise DataError(f"cluster: {len(ids)} patients cannot support k >= {c['k_min']}")
    if k_max < c["k_max"]:
        logger.warning("cluster: k range clipped to %d..%d by cohort size", c["k_min"], k_max)
    report = select_k(x, range(c["k_min"], k_max + 1), seed=run.seed, n_init=c["n_init"])
    fit = report.clusterings[report.best_k]
    run.csv(run.artifact("cluster", "clusters.csv"), ["patient_id", "cluster"], zip(ids, fit.labels.tolist()))
    run.csv(run.artifact("cluster", "silhouette.csv"), ["k", "score"], [(k, _fmt(s)) for k, s in sorted(report.scores.items())])
    run.json(
        run.artifact("cluster", "kmeans.json"),
        {
            "k": fit.k,
            "input": c["input"],
            "centers": fit.centers.tolist(),
            "inertia": fit.inertia,
            "seed": fit.seed,
            "silhouette": {str(k): s for k, s in sorted(report.scores.items())},
        },
    )
    logger.info("cluster: k=%d (silhouette %.4f)", report.best_k, report.scores[report.best_k])


def _forest_config(section: dict, seed: int) -> ForestConfig:
    return ForestConfig(
        n_trees=section["n_trees"],
        max_depth=section["max_depth"],
        min_leaf=section["min_leaf"],
        feature_subsample=section["feature_subsample"],
        seed=seed,
    )


def _aligned_labels(ids, clusters: dict[str, int], producer: str) -> np.ndarray:
    missing = [pid for pid in ids if pid not in clusters]
    if missing:
        raise DataError(f"{len(missing)} patient(s) have no cluster label (first: {missing[0]}); rerun `{producer}`")
    return np.array([clusters[pid] for pid in ids], dtype=np.int64)


def cmd_explain(run: Run) -> None:
    vocab, ids, x = _stage1_ternary(run)
    clusters = _load_clusters(run)
    labels = _aligned_labels(ids, clusters, "cluster")
    e = run.config["explain"]
    k = int(labels.max()) + 1
    forest = train_forest(x, labels, _forest_config(e, run.seed), n_classes=k)
    shap = tree_shap(forest, x)
    names = _names(run)
    profiles = explain_subgroups(forest, x, labels, e["top_m"], vocab.cuis, names, shap)
    run.json(run.artifact("explain", "forest.json"), forest.to_json())
    run.json(run.artifact("explain", "shap_summary.json"), shap_summary(profiles))
    run.json(
        run.artifact("explain", "misclassified.json"),
        misclassified_patients(forest, x, labels, ids, shap, vocab.cuis),
    )


def cmd_severity(run: Run) -> None:
    patients = _load_patients(run)
    series = _load_series(run, patients)
    vitals, _ = _load_vitals(run)
    flags_path = run.input_path("flags", None, required=False)
    flags = FlagConfig.load(flags_path) if flags_path is not None else FlagConfig.default()
    thresholds = SeverityThresholds.from_dict(run.config["severity"]["thresholds"])
    rows, feats = [], []
    for pid, s in series.items():
        anchor = date.fromisoformat(patients[pid]["anchor"])
        tl = severity_timeline(s, vitals.get(pid, []), anchor, flags, thresholds)
        rows.extend(tl.to_rows())
        for k, f in enumerate(tl.features, start=1):
            feats.append({"patient_id": pid, "stage": k, **features_to_dict(f)})
    run.csv(run.artifact("severity", "severity.csv"), ["patient_id", "stage", "state", "score"], rows)
    run.jsonl(run.artifact("severity", "stage_features.jsonl"), feats)
    counts = Counter(r[2] for r in rows)
    logger.info("severity: %s", dict(sorted(counts.items())))


def _load_timelines(run: Run, patients: dict[str, dict]) -> dict[str, SeverityTimeline]:
    path = run.need(run.artifact("severity", "severity.csv"), "severity")
    states: dict[str, list[tuple[int, SepsisState]]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for r in csv.DictReader(fh):
            states.setdefault(r["patient_id"], []).append((int(r["stage"]), SepsisState(r["state"])))
    return {
        pid: SeverityTimeline(pid, [s for _, s in sorted(v)], disposition_from_dict(patients.get(pid, {}).get("disposition")))
        for pid, v in sorted(states.items())
    }


def cmd_pathways(run: Run) -> None:
    patients = _load_patients(run)
    series = _load_series(run, patients)
    timelines = _load_timelines(run, patients)
    clusters = _load_clusters(run)
    sequences = {pid: label_transitions(tl) for pid, tl in timelines.items()}
    p = run.config["pathways"]
    nets = build_networks(series, sequences, clusters, p["top_m"])
    names = _names(run)
    run.json(run.artifact("pathways", "outcomes.json"), sequences_to_dict(sequences))
    run.json(
        run.artifact("pathways", "transitions.json"),
        {str(g): {str(t): m.to_dict() for t, m in sorted(net.matrices.items())} for g, net in sorted(nets.items())},
    )
    for g, net in sorted(nets.items()):
        for fmt in ("dot", "json"):
            run.text(run.artifact("pathways", f"subgroup_{g}/network.{fmt}"), export_network(net, fmt, names, p["min_support"]))
    header, rows = heatmap_rows(stage2_distribution(sequences, clusters, sorted(nets)))
    run.csv(run.artifact("pathways", "stage2_heatmap.csv"), header, rows)


def cmd_predict(run: Run) -> None:
    vocab, ids, x = _stage1_ternary(run)
    clusters = _load_clusters(run)
    labels = _aligned_labels(ids, clusters, "cluster")
    sequences = sequences_from_dict(read_json(run.need(run.artifact("pathways", "outcomes.json"), "pathways")))
    pc = run.config["predict"]
    k = int(labels.max()) + 1
    try:
        sub = train_subgroup_classifier(
            x, labels, k, pc["subgroup_model"], _forest_config(pc, run.seed), pc["test_size"], run.seed, ids
        )
    except ValueError as exc:
        raise DataError(f"predict: {exc}") from None

    if pc["state_input"] == "ternary":
        feats = x
    elif pc["state_input"] == "dense":
        dense_ids, dense = _load_dense(run, 1)
        index = {pid: i for i, pid in enumerate(dense_ids)}
        feats = dense[[index[pid] for pid in ids]]
    else:
        ext_ids, ext = load_external_features(run.input_path("external_features", None))
        index = {pid: i for i, pid in enumerate(ext_ids)}
        missing = [pid for pid in ids if pid not in index]
        if missing:
            raise DataError(f"external_features.csv lacks {len(missing)} patient(s), e.g. {missing[0]}")
        feats = ext[[index[pid] for pid in ids]]

    rows, ys, excluded = stage2_task(sequences, ids)
    scfg = StateClassifierConfig(
        hidden=pc["hidden"],
        activation=pc["activation"],
        epochs=pc["epochs"],
        learning_rate=pc["learning_rate"],
        batch_size=pc["batch_size"],
        seed=run.seed,
    )
    try:
        ablation = state_ablation(feats[rows], ys, labels[rows], k, scfg, pc["test_size"], [ids[i] for i in rows])
    except ValueError as exc:
        raise DataError(f"predict: {exc}") from None

    metrics = {
        "subgroup_classifier": sub.metrics.to_dict(),
        "state_with_subgroup": ablation.metrics_with.to_dict(),
        "state_without_subgroup": ablation.metrics_without.to_dict(),
        "state_task": {"n_patients": len(rows), "excluded": excluded, "classes": list(STATE_CLASSES)},
    }
    run.json(run.artifact("predict", "metrics.json"), metrics)
    run.json(run.artifact("predict", "subgroup_model.json"), {"kind": sub.kind, "n_classes": k, "model": sub.model.to_json()})
    run.json(run.artifact("predict", "state_model_with_subgroup.json"), ablation.with_subgroup.to_json())
    run.json(run.artifact("predict", "state_model_without_subgroup.json"), ablation.without_subgroup.to_json())

    test_ids = set(sub.test_ids)
    out_rows = []
    for i, pid in enumerate(ids):
        pred = predict_pathway(x[i], sub, ablation.with_subgroup, None, feats[i])
        out_rows.append(
            [
                pid,
                "test" if pid in test_ids else "train",
                int(labels[i]),
                pred.subgroup,
                *[f"{pred.state_distribution[c]:.6f}" for c in STATE_CLASSES],
                f"pathways/subgroup_{pred.network_key}/network.json",
            ]
        )
    run.csv(
        run.artifact("predict", "predictions.csv"),
        ["patient_id", "split", "cluster", "predicted_subgroup", *[f"p_{c}" for c in STATE_CLASSES], "network"],
        out_rows,
    )
    logger.info(
        "predict: subgroup acc %.4f; state acc with %.4f / without %.4f",
        sub.metrics.accuracy,
        ablation.metrics_with.accuracy,
        ablation.metrics_without.accuracy,
    )


HANDLERS: dict[str, Callable[[Run], None]] = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "structure": cmd_structure,
    "stages": cmd_stages,
    "vectors": cmd_vectors,
    "cluster": cmd_cluster,
    "explain": cmd_explain,
    "severity": cmd_severity,
    "pathways": cmd_pathways,
    "predict": cmd_predict,
}


def run_command(command: str, config: dict, out: str | Path) -> Run:
    """Run one subcommand (or the ``all`` chain) and write its manifest(s).

    Args:
        command: one of :data:`COMMANDS`.
        config: a validated config (see :func:`load_config`).
        out: output directory.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown subcommand {command!r}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if command != "all":
        run = Run(config, out)
        HANDLERS[command](run)
        run.write_manifest(command)
        return run
    total = Run(config, out)
    for step in STEPS:
        run = Run(config, out)
        HANDLERS[step](run)
        run.write_manifest(step)
        for k, v in run.inputs.items():
            if k not in total.outputs:
                total.inputs[k] = v
        total.outputs.update(run.outputs)
    total.write_manifest("all")
    return total


# entry point ------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sepsis-pathways", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=COMMANDS, help="pipeline step to run")
    p.add_argument("--config", help="JSON config file (defaults are used for missing keys)")
    p.add_argument("--out", default="pathways_out", help="output directory (default: %(default)s)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--print-config", action="store_true", help="print the effective config and exit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config, args.seed)
        if args.print_config:
            sys.stdout.write(dumps_json(config))
            return 0
        if args.command is None:
            raise ConfigError("a subcommand is required (or --print-config)")
        run_command(args.command, config, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InfeasibleConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, corpus_mod.NoRecordsError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
