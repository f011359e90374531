"""Per-cluster summaries of forest attributions (what drives each subgroup)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .forest import ForestModel
from .treeshap import ShapAttribution, tree_shap

PRESENCE = "presence"
ABSENCE = "absence"


@dataclass(frozen=True)
class ProfileEntry:
    cui: str
    preferred_name: str
    score: float  # mean SHAP toward the cluster's class, restricted to the polarity
    mean_abs_shap: float
    direction: str  # "presence" (feature = +1) or "absence" (feature = -1)

    def to_list(self) -> list:
        return [self.cui, self.preferred_name, round(self.mean_abs_shap, 10), self.direction]


@dataclass
class SubgroupProfile:
    cluster: int
    n_patients: int
    presence: list[ProfileEntry] = field(default_factory=list)
    absence: list[ProfileEntry] = field(default_factory=list)

    def ranked(self) -> list[ProfileEntry]:
        return sorted(self.presence + self.absence, key=lambda e: (-e.score, e.cui, e.direction))


def _top(scores: np.ndarray, mean_abs: np.ndarray, cuis, names, direction: str, top_m: int) -> list[ProfileEntry]:
    order = sorted(
        (i for i in range(len(scores)) if scores[i] > 0),
        key=lambda i: (-scores[i], cuis[i]),
    )
    return [
        ProfileEntry(cuis[i], names.get(cuis[i], cuis[i]), float(scores[i]), float(mean_abs[i]), direction)
        for i in order[:top_m]
    ]


def explain_subgroups(
    forest: ForestModel,
    ternary_vectors,
    assignment: Sequence[int],
    top_m: int = 5,
    cuis: Sequence[str] | None = None,
    names: Mapping[str, str] | None = None,
    shap: ShapAttribution | None = None,
) -> list[SubgroupProfile]:
    """Rank the concepts that push members of each cluster toward its class.

    For the members of cluster ``c`` the SHAP values toward class ``c`` are
    split by the member's own feature value: a +1 entry contributes to the
    presence score of that concept, a -1 entry to its absence score (the
    "absence of X" pattern). Scores are means over all members, and only
    concepts with a positive score are listed.

    Args:
        forest: forest trained to predict ``assignment``.
        ternary_vectors: (n, |V|) matrix in {-1, 0, 1}.
        assignment: cluster label of every row.
        top_m: maximum entries per direction.
        cuis: vocabulary order; defaults to feature indices as strings.
        names: CUI -> preferred name.
        shap: precomputed attributions for ``ternary_vectors``.
    """
    x = np.asarray(ternary_vectors, dtype=float)
    labels = np.asarray(assignment, dtype=np.int64)
    if len(labels) != len(x):
        raise ValueError("one label per vector required")
    cuis = [str(i) for i in range(x.shape[1])] if cuis is None else list(cuis)
    names = {} if names is None else dict(names)
    shap = tree_shap(forest, x) if shap is None else shap
    profiles = []
    for c in range(forest.n_classes):
        members = np.flatnonzero(labels == c)
        if len(members) == 0:
            profiles.append(SubgroupProfile(c, 0))
            continue
        phi = shap.values[members, :, c]
        xm = x[members]
        pres = (phi * (xm > 0)).mean(axis=0)
        absn = (phi * (xm < 0)).mean(axis=0)
        mean_abs = np.abs(phi).mean(axis=0)
        profiles.append(
            SubgroupProfile(
                c,
                len(members),
                _top(pres, mean_abs, cuis, names, PRESENCE, top_m),
                _top(absn, mean_abs, cuis, names, ABSENCE, top_m),
            )
        )
    return profiles


def shap_summary(profiles: Sequence[SubgroupProfile]) -> dict:
    """``{cluster: {"n_patients", "features": [[cui, name, mean_abs_shap, direction], ...]}}``."""
    return {
        str(p.cluster): {"n_patients": p.n_patients, "features": [e.to_list() for e in p.ranked()]}
        for p in profiles
    }


def misclassified_patients(
    forest: ForestModel,
    ternary_vectors,
    assignment: Sequence[int],
    patient_ids: Sequence[str],
    shap: ShapAttribution | None = None,
    cuis: Sequence[str] | None = None,
) -> list[dict]:
    """Patients whose forest label differs from their cluster, with SHAP rows.

    Each record carries the nonzero SHAP values toward both the cluster's
    class and the predicted class.
    """
    x = np.asarray(ternary_vectors, dtype=float)
    labels = np.asarray(assignment, dtype=np.int64)
    cuis = [str(i) for i in range(x.shape[1])] if cuis is None else list(cuis)
    pred = forest.predict(x)
    wrong = np.flatnonzero(pred != labels)
    if len(wrong) == 0:
        return []
    shap = tree_shap(forest, x[wrong]) if shap is None else ShapAttribution(shap.values[wrong], shap.base)
    out = []
    for row, i in enumerate(wrong):
        rec = {"patient_id": str(patient_ids[i]), "cluster": int(labels[i]), "predicted": int(pred[i])}
        for key, cls in (("shap_cluster", labels[i]), ("shap_predicted", pred[i])):
            vals = shap.values[row, :, cls]
            rec[key] = {cuis[j]: round(float(vals[j]), 10) for j in np.flatnonzero(vals)}
        out.append(rec)
    return out
