"""Shared fixtures that drive the pipeline through its public entry points."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from sepsis_pathways.cli import load_config, run_command
from sepsis_pathways.corpus import Disposition, DispositionStatus
from sepsis_pathways.pathways import label_transitions
from sepsis_pathways.severity import SepsisState, SeverityTimeline


def run_steps(out: Path, steps, n_patients: int = 200, seed: int = 0, **synth) -> dict:
    config = load_config(seed=seed)
    config["synth"].update(n_patients=n_patients, **synth)
    for step in steps:
        run_command(step, config, out)
    return config


def read_severity(out: Path) -> dict[str, list[SepsisState]]:
    states: dict[str, list[tuple[int, SepsisState]]] = {}
    with open(out / "severity" / "severity.csv", encoding="utf-8", newline="") as fh:
        for r in csv.DictReader(fh):
            states.setdefault(r["patient_id"], []).append((int(r["stage"]), SepsisState(r["state"])))
    return {pid: [s for _, s in sorted(v)] for pid, v in states.items()}


def pipeline_sequences(out: Path) -> dict:
    """Outcome sequences recomputed from the severity and ingest artifacts."""
    dispositions = {}
    with open(out / "ingest" / "patients.jsonl", encoding="utf-8") as fh:
        for line in fh:
            r = json.loads(line)
            d = r["disposition"]
            if d:
                dispositions[r["patient_id"]] = Disposition(r["patient_id"], DispositionStatus(d["status"]), d["discharge_day"])
    return {
        pid: label_transitions(SeverityTimeline(pid, states, dispositions.get(pid)))
        for pid, states in read_severity(out).items()
    }


def ground_truth(out: Path) -> dict:
    return json.loads((out / "synth" / "ground_truth.json").read_text("utf-8"))
