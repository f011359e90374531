"""New-patient prediction: stage-1 subgroup and the stage-2 outcome state.

Two models mirror the usual ablation: a tree ensemble predicting the
subgroup from the stage-1 ternary vector, and a small softmax network
predicting the first-boundary outcome (Improve / Persistent / Deteriorate)
with and without the subgroup label as an extra one-hot input.
"""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support
from sklearn.model_selection import train_test_split

from . import _mlp
from .pathways import Outcome, TransitionNetwork
from .subgroups.forest import ForestConfig, ForestModel, train_forest

logger = logging.getLogger(__name__)

STATE_CLASSES = (Outcome.IMPROVE.value, Outcome.PERSISTENT.value, Outcome.DETERIORATE.value)
MODEL_KINDS = ("decision_tree", "random_forest")


@dataclass
class ClassifierMetrics:
    accuracy: float
    precision: dict[str, float]
    recall: dict[str, float]
    confusion: list[list[int]]
    labels: list[str]
    n_train: int
    n_test: int
    seed: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(y_true, y_pred, labels: Sequence, names: Sequence[str], n_train: int, seed: int, config: dict) -> ClassifierMetrics:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    acc = float(np.mean(y_true == y_pred)) if len(y_true) else float("nan")
    p, r, _, _ = precision_recall_fscore_support(y_true, y_pred, labels=list(labels), zero_division=0)
    cm = confusion_matrix(y_true, y_pred, labels=list(labels)) if len(y_true) else np.zeros((len(labels),) * 2, int)
    return ClassifierMetrics(
        accuracy=acc,
        precision={n: float(v) for n, v in zip(names, p)},
        recall={n: float(v) for n, v in zip(names, r)},
        confusion=cm.astype(int).tolist(),
        labels=list(names),
        n_train=int(n_train),
        n_test=int(len(y_true)),
        seed=seed,
        config=config,
    )


def split_indices(labels, test_size: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded train/test index split, stratified whenever every class can be split."""
    labels = np.asarray(labels)
    n = len(labels)
    idx = np.arange(n)
    if n < 2 or test_size <= 0:
        return idx, np.array([], dtype=np.int64)
    counts = Counter(labels.tolist())
    n_test = int(np.ceil(test_size * n))
    stratify = labels if min(counts.values()) >= 2 and n_test >= len(counts) and n - n_test >= len(counts) else None
    tr, te = train_test_split(idx, test_size=test_size, random_state=seed, stratify=stratify)
    tr, te = np.sort(tr), np.sort(te)
    assert not set(tr.tolist()) & set(te.tolist())
    return tr, te


# subgroup classifier ----------------------------------------------------------


@dataclass
class SubgroupClassifier:
    kind: str
    model: ForestModel
    n_classes: int
    train_ids: list[str] = field(default_factory=list)
    test_ids: list[str] = field(default_factory=list)
    metrics: ClassifierMetrics | None = None

    def predict_proba(self, x) -> np.ndarray:
        return self.model.predict_proba(x)

    def predict(self, x) -> np.ndarray:
        return self.model.predict(x)


def _forest_config_for(kind: str, config: ForestConfig | None, seed: int) -> ForestConfig:
    base = ForestConfig(seed=seed) if config is None else config
    if kind == "random_forest":
        return base
    if kind == "decision_tree":
        return ForestConfig(
            n_trees=1,
            max_depth=base.max_depth,
            min_leaf=base.min_leaf,
            feature_subsample=None,
            bootstrap=False,
            seed=base.seed,
        )
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def train_subgroup_classifier(
    x,
    labels,
    n_clusters: int | None = None,
    kind: str = "random_forest",
    config: ForestConfig | None = None,
    test_size: float = 0.2,
    seed: int = 0,
    ids: Sequence[str] | None = None,
) -> SubgroupClassifier:
    """Fit on a stratified split and report held-out metrics.

    Args:
        x: stage-1 ternary vectors.
        labels: cluster label per row.
        n_clusters: number of subgroups k (default: max label + 1).
        kind: ``"decision_tree"`` or ``"random_forest"``.
        config: tree settings; for a decision tree only depth and leaf size are used.
        test_size: held-out fraction (0 trains on everything).
        seed: split and training seed.
        ids: patient ids, recorded per split.

    Raises:
        ValueError: when k < 2.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    k = int(y.max()) + 1 if n_clusters is None else int(n_clusters)
    if k < 2:
        raise ValueError(f"need at least 2 subgroups, got k={k}")
    ids = [str(i) for i in range(len(y))] if ids is None else [str(i) for i in ids]
    cfg = _forest_config_for(kind, config, seed)
    tr, te = split_indices(y, test_size, seed)
    model = train_forest(x[tr], y[tr], cfg, n_classes=k)
    pred = model.predict(x[te]) if len(te) else np.array([], dtype=np.int64)
    metrics = evaluate(y[te], pred, range(k), [str(c) for c in range(k)], len(tr), seed, {"kind": kind, **asdict(cfg)})
    return SubgroupClassifier(kind, model, k, [ids[i] for i in tr], [ids[i] for i in te], metrics)


# state classifier -----------------------------------------------------------


@dataclass
class StateClassifierConfig:
    hidden: int = 64
    activation: str = "tanh"
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0


@dataclass
class StateClassifier:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]
    classes: tuple[str, ...] = STATE_CLASSES
    n_subgroups: int = 0  # > 0 when a one-hot subgroup block is appended to the input
    config: dict = field(default_factory=dict)
    loss_curve: list[float] = field(default_factory=list)

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @property
    def uses_subgroup(self) -> bool:
        return self.n_subgroups > 0

    def logits(self, x) -> np.ndarray:
        out, _ = _mlp.forward(np.asarray(x, dtype=float), self.weights, self.biases, self.activations)
        return out

    def predict_proba(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_inputs:
            raise ValueError(f"expected {self.n_inputs} inputs, got {x.shape[1]}")
        return softmax(self.logits(x))

    def predict(self, x) -> list[str]:
        return [self.classes[i] for i in np.argmax(self.predict_proba(x), axis=1)]

    def to_json(self) -> dict:
        return {
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activations": list(self.activations),
            "classes": list(self.classes),
            "n_subgroups": self.n_subgroups,
            "config": dict(self.config),
            "loss_curve": list(self.loss_curve),
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "StateClassifier":
        return cls(
            [np.asarray(w, dtype=float) for w in d["weights"]],
            [np.asarray(b, dtype=float) for b in d["biases"]],
            list(d["activations"]),
            tuple(d["classes"]),
            int(d["n_subgroups"]),
            dict(d.get("config", {})),
            [float(v) for v in d.get("loss_curve", [])],
        )


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_and_grads(model: StateClassifier, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy of integer targets ``y`` and its parameter gradients."""
    logits, cache = _mlp.forward(x, model.weights, model.biases, model.activations)
    p = softmax(logits)
    n = len(y)
    loss = float(-np.mean(np.log(np.clip(p[np.arange(n), y], 1e-300, None))))
    grad = p.copy()
    grad[np.arange(n), y] -= 1.0
    grad /= n
    gw, gb = _mlp.backward(grad, cache, model.weights, model.activations, output_is_preactivation=True)
    return loss, gw, gb


def with_subgroup_onehot(x, subgroups, n_subgroups: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    onehot = np.zeros((len(x), n_subgroups))
    onehot[np.arange(len(x)), np.asarray(subgroups, dtype=np.int64)] = 1.0
    return np.hstack([x, onehot])


def _init_state_model(n_base: int, n_subgroups: int, n_classes: int, cfg: StateClassifierConfig) -> StateClassifier:
    # Draws for the shared inputs come from the same stream whether or not a
    # subgroup block is present, so both ablation arms start alike.
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 11]))
    rng_extra = np.random.default_rng(np.random.SeedSequence([cfg.seed, 12]))
    fan_in = n_base + n_subgroups
    limit1 = np.sqrt(6.0 / (fan_in + cfg.hidden))
    w1 = rng.uniform(-1.0, 1.0, size=(n_base, cfg.hidden))
    if n_subgroups:
        w1 = np.vstack([w1, rng_extra.uniform(-1.0, 1.0, size=(n_subgroups, cfg.hidden))])
    limit2 = np.sqrt(6.0 / (cfg.hidden + n_classes))
    w2 = rng.uniform(-limit2, limit2, size=(cfg.hidden, n_classes))
    return StateClassifier(
        [w1 * limit1, w2],
        [np.zeros(cfg.hidden), np.zeros(n_classes)],
        [cfg.activation, "linear"],
        STATE_CLASSES,
        n_subgroups,
        asdict(cfg),
    )


def train_state_classifier(
    features,
    outcomes: Sequence[str],
    config: StateClassifierConfig | None = None,
    subgroups: Sequence[int] | None = None,
    n_subgroups: int = 0,
) -> StateClassifier:
    """Mini-batch Adam on cross-entropy over {Improve, Persistent, Deteriorate}.

    Args:
        features: (n, d) stage-1 representation.
        outcomes: first-boundary outcome per row (already restricted to the three classes).
        config: network and optimizer settings.
        subgroups: subgroup label per row; appended one-hot when ``n_subgroups > 0``.
        n_subgroups: size of the one-hot block (0 = no subgroup feature).

    Raises:
        ValueError: if a class is missing from the training data.
    """
    cfg = StateClassifierConfig() if config is None else config
    x = np.asarray(features, dtype=float)
    counts = Counter(outcomes)
    unexpected = set(counts) - set(STATE_CLASSES)
    if unexpected:
        raise ValueError(f"outcomes outside {STATE_CLASSES}: {sorted(unexpected)}")
    missing = [c for c in STATE_CLASSES if counts.get(c, 0) == 0]
    if missing:
        raise ValueError(f"class(es) {missing} absent from training data; counts={dict(counts)}")
    y = np.array([STATE_CLASSES.index(o) for o in outcomes])
    if n_subgroups:
        if subgroups is None:
            raise ValueError("subgroups required when n_subgroups > 0")
        x = with_subgroup_onehot(x, subgroups, n_subgroups)
    model = _init_state_model(x.shape[1] - n_subgroups, n_subgroups, len(STATE_CLASSES), cfg)
    opt = _mlp.Optimizer(model.weights + model.biases, "adam", cfg.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 13]))
    n = len(y)
    bs = max(1, min(cfg.batch_size, n))
    curve = [cross_entropy_and_grads(model, x, y)[0]]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            b = order[start : start + bs]
            _, gw, gb = cross_entropy_and_grads(model, x[b], y[b])
            opt.step(gw + gb)
        curve.append(cross_entropy_and_grads(model, x, y)[0])
    model.loss_curve = curve
    return model


def stage2_task(sequences: Mapping[str, Sequence[Outcome]], ids: Sequence[str]) -> tuple[list[int], list[str], dict[str, int]]:
    """Rows of ``ids`` whose first-boundary outcome is one of the three classes.

    Returns:
        ``(row_indices, outcomes, excluded_counts)``; exclusions are logged.
    """
    rows, ys = [], []
    excluded: Counter = Counter()
    for i, pid in enumerate(ids):
        seq = sequences.get(pid)
        first = seq[0].value if seq else "missing"
        if first in STATE_CLASSES:
            rows.append(i)
            ys.append(first)
        else:
            excluded[first] += 1
    if excluded:
        logger.info("stage-2 task: excluded %d patients %s", sum(excluded.values()), dict(sorted(excluded.items())))
    return rows, ys, dict(sorted(excluded.items()))


@dataclass
class AblationResult:
    with_subgroup: StateClassifier
    without_subgroup: StateClassifier
    metrics_with: ClassifierMetrics
    metrics_without: ClassifierMetrics
    train_ids: list[str]
    test_ids: list[str]


def state_ablation(
    features,
    outcomes: Sequence[str],
    subgroups: Sequence[int],
    n_subgroups: int,
    config: StateClassifierConfig | None = None,
    test_size: float = 0.2,
    ids: Sequence[str] | None = None,
) -> AblationResult:
    """Train the state classifier with and without the subgroup one-hot on one shared split."""
    cfg = StateClassifierConfig() if config is None else config
    x = np.asarray(features, dtype=float)
    y = list(outcomes)
    g = np.asarray(subgroups, dtype=np.int64)
    ids = [str(i) for i in range(len(y))] if ids is None else [str(i) for i in ids]
    tr, te = split_indices(np.array(y), test_size, cfg.seed)
    ytr = [y[i] for i in tr]
    yte = [y[i] for i in te]
    plain = train_state_classifier(x[tr], ytr, cfg)
    both = train_state_classifier(x[tr], ytr, cfg, g[tr], n_subgroups)
    m_plain = evaluate(yte, plain.predict(x[te]) if len(te) else [], STATE_CLASSES, STATE_CLASSES, len(tr), cfg.seed,
                       {**asdict(cfg), "with_subgroup": False})
    m_both = evaluate(
        yte,
        both.predict(with_subgroup_onehot(x[te], g[te], n_subgroups)) if len(te) else [],
        STATE_CLASSES,
        STATE_CLASSES,
        len(tr),
        cfg.seed,
        {**asdict(cfg), "with_subgroup": True},
    )
    return AblationResult(both, plain, m_both, m_plain, [ids[i] for i in tr], [ids[i] for i in te])


# composition ----------------------------------------------------------------


@dataclass
class PathwayPrediction:
    subgroup: int
    subgroup_probabilities: list[float]
    state_distribution: dict[str, float]
    network_key: int
    network: TransitionNetwork | None = None


def predict_pathway(
    ternary_stage1,
    subgroup_model: SubgroupClassifier | None,
    state_model: StateClassifier | None,
    networks: Mapping[int, TransitionNetwork] | None = None,
    state_features=None,
) -> PathwayPrediction:
    """Predicted subgroup, stage-2 state distribution and that subgroup's network.

    Args:
        ternary_stage1: the patient's stage-1 ternary vector.
        subgroup_model: trained subgroup classifier.
        state_model: trained state classifier.
        networks: subgroup -> transition network.
        state_features: input for the state model when it was not trained
            on the ternary vector (e.g. dense codes); defaults to the vector.

    Raises:
        ValueError: if either model is missing.
    """
    if subgroup_model is None or state_model is None:
        raise ValueError("both the subgroup and the state classifier must be trained first")
    x = np.atleast_2d(np.asarray(ternary_stage1, dtype=float))
    proba = subgroup_model.predict_proba(x)[0]
    g = int(np.argmax(proba))
    feats = x if state_features is None else np.atleast_2d(np.asarray(state_features, dtype=float))
    if state_model.uses_subgroup:
        feats = with_subgroup_onehot(feats, [g], state_model.n_subgroups)
    dist = state_model.predict_proba(feats)[0]
    net = None if networks is None else networks.get(g)
    return PathwayPrediction(
        g,
        [float(p) for p in proba],
        {c: float(p) for c, p in zip(state_model.classes, dist)},
        g,
        net,
    )


def load_external_features(path) -> tuple[list[str], np.ndarray]:
    """``external_features.csv``: header row, then ``patient_id, f1, f2, ...`` per patient."""
    ids, rows = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "patient_id" or len(header) < 2:
            raise ValueError(f"{path}: header must start with patient_id followed by feature columns")
        width = len(header) - 1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width + 1:
                raise ValueError(f"{path}:{lineno}: expected {width + 1} fields, got {len(row)}")
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate patient ids")
    return ids, np.asarray(rows, dtype=float).reshape(len(rows), -1)
