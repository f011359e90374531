"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import itertools
import math

import numpy as np

from sepsis_pathways.subgroups.forest import LEAF, DecisionTree


def random_tree(rng: np.random.Generator, n_features: int, max_depth: int = 3, n_classes: int = 3, p_split: float = 0.8) -> DecisionTree:
    """A random tree with consistent covers; features may repeat along a path."""
    feature, threshold, left, right, value, cover = [], [], [], [], [], []

    def grow(depth: int, mass: float) -> int:
        node = len(feature)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(rng.dirichlet(np.ones(n_classes)))
        cover.append(mass)
        if depth < max_depth and rng.random() < p_split:
            feature[node] = int(rng.integers(n_features))
            threshold[node] = float(rng.random())
            share = float(rng.uniform(0.1, 0.9))
            left[node] = grow(depth + 1, mass * share)
            right[node] = grow(depth + 1, mass * (1 - share))
        return node

    grow(0, float(rng.uniform(5, 50)))
    return DecisionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
        np.array(cover, dtype=float),
        n_features,
    )


def conditional_expectation(tree: DecisionTree, x: np.ndarray, known: frozenset) -> np.ndarray:
    """Tree output with features outside ``known`` integrated out by cover."""

    def walk(node: int) -> np.ndarray:
        f = tree.feature[node]
        if f == LEAF:
            return tree.value[node]
        l, r = tree.left[node], tree.right[node]
        if f in known:
            return walk(l if x[f] <= tree.threshold[node] else r)
        return (tree.cover[l] * walk(l) + tree.cover[r] * walk(r)) / tree.cover[node]

    return walk(0)


def brute_force_shapley(tree: DecisionTree, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact Shapley values by enumerating every feature subset.

    Returns ``(phi[feature, class], base[class])``.
    """
    m = tree.n_features
    v = {}
    for r in range(m + 1):
        for subset in itertools.combinations(range(m), r):
            v[frozenset(subset)] = conditional_expectation(tree, x, frozenset(subset))
    phi = np.zeros((m, tree.n_classes))
    fact = [math.factorial(i) for i in range(m + 1)]
    for i in range(m):
        others = [j for j in range(m) if j != i]
        for r in range(m):
            w = fact[r] * fact[m - r - 1] / fact[m]
            for subset in itertools.combinations(others, r):
                s = frozenset(subset)
                phi[i] += w * (v[s | {i}] - v[s])
    return phi, v[frozenset()]


def dp_levenshtein(a: str, b: str) -> int:
    """Textbook Wagner-Fischer table, the oracle for the bit-parallel version."""
    d = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        d[i][0] = i
    for j in range(len(b) + 1):
        d[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return d[len(a)][len(b)]


def closed_form_bounds(los):
    """Stage ranges written out directly from the segmentation rule."""
    if los == 2:
        return [(1, 1), (2, 2)]
    mids = [(a, min(a + 2, los - 1)) for a in range(3, los, 3)]
    return [(1, 2), *mids, (los, los)]


def numeric_grad_check(model, x, eps=1e-6):
    """Worst per-parameter relative error of autoencoder gradients vs central differences."""
    from sepsis_pathways.vectors import mse_loss_and_grads

    _, gw, gb = mse_loss_and_grads(model, x)
    worst = 0.0
    for params, grads in ((model.weights, gw), (model.biases, gb)):
        for p, g in zip(params, grads):
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + eps
                up = mse_loss_and_grads(model, x)[0]
                p[idx] = old - eps
                down = mse_loss_and_grads(model, x)[0]
                p[idx] = old
                num = (up - down) / (2 * eps)
                denom = max(abs(num), abs(g[idx]), 1e-8)
                worst = max(worst, abs(num - g[idx]) / denom)
    return worst


SCORES = {"SIRS": 1, "Sepsis": 2, "SevereSepsis": 3, "SepticShock": 4, "Unknown": None}


def _ladder_table() -> dict:
    table = {}
    for i, o, h, f, hv in itertools.product([False, True], repeat=5):
        for n in range(5):
            hypo = h or hv
            if i and o and hypo and f:
                state = "SepticShock"
            elif i and o:
                state = "SevereSepsis"
            elif i and n >= 2:
                state = "Sepsis"
            elif n >= 2:
                state = "SIRS"
            else:
                state = "Unknown"
            table[(i, o, h, f, n, hv)] = state
    return table


_LADDER = _ladder_table()


def severity_oracle(infection: bool, organ: bool, hypotension_flag: bool, fluids: bool, sirs: int, hypotensive_vitals: bool) -> str:
    """Truth table of the severity ladder written as a flat lookup."""
    return _LADDER[(infection, organ, hypotension_flag, fluids, sirs, hypotensive_vitals)]


def features_for(infection: bool, organ: bool, hypotension_flag: bool, fluids: bool, sirs: int, hypotensive_vitals: bool):
    """Stage features with exactly ``sirs`` abnormal SIRS criteria."""
    from sepsis_pathways.severity import StageClinicalFeatures

    normal = {"max_temp": 37.0, "min_temp": 36.8, "max_heart_rate": 80.0, "max_resp_rate": 16.0, "max_wbc": 8.0, "min_wbc": 7.0}
    abnormal = [{"max_temp": 39.0}, {"max_heart_rate": 110.0}, {"max_resp_rate": 26.0}, {"min_wbc": 2.5}]
    vitals = dict(normal)
    for change in abnormal[:sirs]:
        vitals.update(change)
    return StageClinicalFeatures(
        **vitals,
        min_systolic_bp=82.0 if hypotensive_vitals else 118.0,
        min_mean_arterial_pressure=60.0 if hypotensive_vitals else 85.0,
        infection_suspected=infection,
        organ_dysfunction=organ,
        hypotension_documented=hypotension_flag,
        iv_fluids_given=fluids,
    )
