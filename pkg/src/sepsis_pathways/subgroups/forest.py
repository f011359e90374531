"""CART classification trees (Gini) and bootstrap random forests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

LEAF = -1


@dataclass
class DecisionTree:
    """Array-backed binary tree. Samples with ``x[feature] <= threshold`` go left.

    ``cover`` is the (bootstrap-weighted) training mass reaching each node and
    ``value`` the class distribution of that mass.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    n_features: int

    @property
    def n_classes(self) -> int:
        return self.value.shape[1]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] == LEAF

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        node = np.zeros(len(x), dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = x[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != LEAF
        return node

    def predict_proba(self, x) -> np.ndarray:
        return self.value[self.apply(x)]

    def to_json(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "cover": self.cover.tolist(),
            "n_features": self.n_features,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "DecisionTree":
        return cls(
            np.asarray(obj["feature"], dtype=np.int64),
            np.asarray(obj["threshold"], dtype=float),
            np.asarray(obj["left"], dtype=np.int64),
            np.asarray(obj["right"], dtype=np.int64),
            np.asarray(obj["value"], dtype=float),
            np.asarray(obj["cover"], dtype=float),
            int(obj["n_features"]),
        )


@dataclass
class ForestConfig:
    n_trees: int = 200
    max_depth: int = 12
    min_leaf: int = 2
    feature_subsample: str | int | float | None = "sqrt"
    bootstrap: bool = True
    seed: int = 0


def _n_candidate_features(setting, n_features: int) -> int:
    if setting is None:
        return n_features
    if setting == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    if setting == "log2":
        return max(1, int(math.log2(n_features))) if n_features > 1 else 1
    if isinstance(setting, float):
        if not 0.0 < setting <= 1.0:
            raise ValueError("fractional feature_subsample must be in (0, 1]")
        return max(1, int(setting * n_features))
    if isinstance(setting, int):
        return max(1, min(setting, n_features))
    raise ValueError(f"bad feature_subsample {setting!r}")


def _gini_children(left: np.ndarray, total: np.ndarray):
    """Weighted child impurity sum for each candidate split row."""
    right = total[None, :] - left
    nl = left.sum(axis=1)
    nr = right.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        gl = nl - np.where(nl > 0, (left * left).sum(axis=1) / nl, 0.0)
        gr = nr - np.where(nr > 0, (right * right).sum(axis=1) / nr, 0.0)
    return gl + gr


def build_tree(
    x: np.ndarray,
    y: np.ndarray,
    weight: np.ndarray,
    n_classes: int,
    max_depth: int = 12,
    min_leaf: int = 1,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> DecisionTree:
    """Grow a CART tree on the rows with positive ``weight``.

    Candidate features are visited in random order until ``max_features``
    non-constant ones have been examined (more are visited when the first
    ones are constant on the node).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    n_features = x.shape[1]
    max_features = n_features if max_features is None else max_features
    feature, threshold, left, right, value, cover = [], [], [], [], [], []

    def new_node(idx):
        counts = np.bincount(y[idx], weights=weight[idx], minlength=n_classes)
        total = counts.sum()
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(counts / total)
        cover.append(total)
        return len(feature) - 1, counts

    root_idx = np.flatnonzero(weight > 0)
    root, root_counts = new_node(root_idx)
    stack = [(root, root_idx, root_counts, 0)]
    while stack:
        node, idx, counts, depth = stack.pop()
        if depth >= max_depth or len(idx) < 2 * min_leaf or np.count_nonzero(counts) <= 1:
            continue
        total_w = counts.sum()
        parent_imp = total_w - (counts * counts).sum() / total_w
        best = (parent_imp - 1e-12, None, None)
        examined = 0
        w = weight[idx]
        yc = y[idx]
        for f in rng.permutation(n_features):
            if examined >= max_features:
                break
            col = x[idx, f]
            uniq, inv = np.unique(col, return_inverse=True)
            if len(uniq) < 2:
                continue
            examined += 1
            u = len(uniq)
            cw = np.bincount(inv * n_classes + yc, weights=w, minlength=u * n_classes).reshape(u, n_classes)
            cn = np.bincount(inv, minlength=u)
            left_w = np.cumsum(cw, axis=0)[:-1]
            left_n = np.cumsum(cn)[:-1]
            ok = (left_n >= min_leaf) & (len(idx) - left_n >= min_leaf)
            if not ok.any():
                continue
            imp = _gini_children(left_w, counts)
            imp[~ok] = np.inf
            j = int(np.argmin(imp))
            if imp[j] < best[0]:
                best = (imp[j], int(f), 0.5 * (uniq[j] + uniq[j + 1]))
        if best[1] is None:
            continue
        _, f, thr = best
        go_left = x[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        lnode, lcounts = new_node(li)
        rnode, rcounts = new_node(ri)
        feature[node], threshold[node] = f, thr
        left[node], right[node] = lnode, rnode
        stack.append((rnode, ri, rcounts, depth + 1))
        stack.append((lnode, li, lcounts, depth + 1))

    return DecisionTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=float),
        np.asarray(cover, dtype=float),
        n_features,
    )


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    n_features: int
    n_classes: int
    config: ForestConfig = field(default_factory=ForestConfig)
    oob_score: float | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_proba(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[1]}")
        out = np.zeros((len(x), self.n_classes))
        for t in self.trees:
            out += t.predict_proba(x)
        return out / len(self.trees)

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)

    def to_json(self) -> dict:
        cfg = self.config
        return {
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "oob_score": self.oob_score,
            "config": {
                "n_trees": cfg.n_trees,
                "max_depth": cfg.max_depth,
                "min_leaf": cfg.min_leaf,
                "feature_subsample": cfg.feature_subsample,
                "bootstrap": cfg.bootstrap,
                "seed": cfg.seed,
            },
            "trees": [t.to_json() for t in self.trees],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ForestModel":
        return cls(
            [DecisionTree.from_json(t) for t in obj["trees"]],
            int(obj["n_features"]),
            int(obj["n_classes"]),
            ForestConfig(**obj["config"]),
            obj.get("oob_score"),
        )


def train_forest(x, labels, config: ForestConfig | None = None, n_classes: int | None = None) -> ForestModel:
    """Bootstrap forest of Gini trees; per-tree generators spawn from ``config.seed``.

    Prediction averages the trees' leaf distributions. When bootstrapping,
    ``oob_score`` is the accuracy of out-of-bag averaged predictions over
    the samples that were out of bag at least once.
    """
    config = ForestConfig() if config is None else config
    x = np.asarray(x, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y) or len(y) == 0:
        raise ValueError("x must be 2-D with one label per row")
    if y.min() < 0:
        raise ValueError("labels must be non-negative integers")
    n, d = x.shape
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    max_features = _n_candidate_features(config.feature_subsample, d)
    trees = []
    oob_sum = np.zeros((n, n_classes))
    oob_hits = np.zeros(n)
    for child in np.random.SeedSequence(config.seed).spawn(config.n_trees):
        rng = np.random.default_rng(child)
        if config.bootstrap:
            weight = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float)
        else:
            weight = np.ones(n)
        tree = build_tree(x, y, weight, n_classes, config.max_depth, config.min_leaf, max_features, rng)
        trees.append(tree)
        if config.bootstrap:
            oob = weight == 0
            if oob.any():
                oob_sum[oob] += tree.predict_proba(x[oob])
                oob_hits[oob] += 1
    oob_score = None
    seen = oob_hits > 0
    if config.bootstrap and seen.any():
        oob_score = float(np.mean(np.argmax(oob_sum[seen], axis=1) == y[seen]))
    return ForestModel(trees, d, n_classes, config, oob_score)
