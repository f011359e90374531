"""Path-dependent TreeSHAP, vectorized over instances and leaves.

For a leaf with unique path features F (|F| = d), let ``z_j`` be the share
of training cover that follows the path through the splits on feature j and
``o_j(x)`` be 1 when x itself follows all of them. The leaf contributes

    phi_i += v * (o_i - z_i) * sum_s w(s, d) * [t^s] prod_{j in F, j != i} (o_j t + z_j)

with ``w(s, d) = s! (d - 1 - s)! / d!``. The product over all of F is built
once per leaf; dividing the factor for i back out is a fixed linear map of
the product's coefficients, precomputed per leaf, so all features of all
leaves are handled by one batched matrix product.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy import sparse

from .forest import LEAF, DecisionTree, ForestModel


@dataclass
class ShapAttribution:
    """``values[n, feature, class]`` and ``base[class]``."""

    values: np.ndarray
    base: np.ndarray

    def for_class(self, c: int) -> tuple[float, np.ndarray]:
        return float(self.base[c]), self.values[..., c]


@dataclass
class _LeafPaths:
    feat: np.ndarray  # (L, D) int
    lo: np.ndarray  # (L, D)
    hi: np.ndarray  # (L, D)
    z: np.ndarray  # (L, D), 1.0 in padding
    valid: np.ndarray  # (L, D) bool
    weights: np.ndarray  # (L, D) w(s, d_leaf)
    unwind: np.ndarray  # (L, D, D + 1), see _unwind_coefficients
    value: np.ndarray  # (L, C)
    base: np.ndarray  # (C,)


def _shapley_weights(d: int, width: int) -> np.ndarray:
    out = np.zeros(width)
    for s in range(d):
        out[s] = factorial(s) * factorial(d - 1 - s) / factorial(d)
    return out


def _unwind_coefficients(z: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``c[l, p, k]`` such that sum_s w_s [t^s] (Q(t) / (t + z_p)) = sum_k c[l, p, k] q_k.

    Synthetic division gives [t^s] Q / (t + z) = sum_{k > s} (-z)^(k-1-s) q_k.
    """
    n_leaves, width = z.shape
    powers = np.ones((n_leaves, width, width))
    for m in range(1, width):
        powers[:, :, m] = powers[:, :, m - 1] * -z
    out = np.zeros((n_leaves, width, width + 1))
    for k in range(1, width + 1):
        # sum_{s<k} w_s (-z)^(k-1-s)
        out[:, :, k] = np.einsum("ls,lps->lp", weights[:, :k], powers[:, :, k - 1 :: -1][:, :, :k])
    return out


def _leaf_paths(tree: DecisionTree) -> _LeafPaths:
    leaves = []  # (node, {feature: [lo, hi, z]})
    stack = [(0, {})]
    while stack:
        node, path = stack.pop()
        f = int(tree.feature[node])
        if f == LEAF:
            leaves.append((node, path))
            continue
        thr = tree.threshold[node]
        parent = tree.cover[node]
        for child, is_left in ((int(tree.left[node]), True), (int(tree.right[node]), False)):
            lo, hi, z = path.get(f, (-np.inf, np.inf, 1.0))
            if is_left:
                hi = min(hi, thr)
            else:
                lo = max(lo, thr)
            new = dict(path)
            new[f] = (lo, hi, z * tree.cover[child] / parent)
            stack.append((child, new))
    width = max((len(p) for _, p in leaves), default=0)
    n_leaves = len(leaves)
    feat = np.zeros((n_leaves, width), dtype=np.int64)
    lo = np.full((n_leaves, width), -np.inf)
    hi = np.full((n_leaves, width), np.inf)
    z = np.ones((n_leaves, width))
    valid = np.zeros((n_leaves, width), dtype=bool)
    weights = np.zeros((n_leaves, width))
    value = np.zeros((n_leaves, tree.n_classes))
    base = np.zeros(tree.n_classes)
    for k, (node, path) in enumerate(leaves):
        for p, f in enumerate(sorted(path)):
            feat[k, p] = f
            lo[k, p], hi[k, p], z[k, p] = path[f]
            valid[k, p] = True
        weights[k] = _shapley_weights(len(path), width)
        value[k] = tree.value[node]
        base += tree.value[node] * tree.cover[node] / tree.cover[0]
    unwind = _unwind_coefficients(z, weights)
    return _LeafPaths(feat, lo, hi, z, valid, weights, unwind, value, base)


def _tree_shap_batch(paths: _LeafPaths, x: np.ndarray, n_features: int) -> np.ndarray:
    n = len(x)
    n_leaves, width = paths.feat.shape
    n_classes = paths.value.shape[1]
    phi = np.zeros((n, n_features, n_classes))
    if width == 0:
        return phi
    xv = x[:, paths.feat]  # (n, L, D)
    one = ((xv > paths.lo) & (xv <= paths.hi) & paths.valid).astype(float)
    one = np.ascontiguousarray(one.transpose(1, 2, 0))  # (L, D, n)

    # q[l, s, :] = coefficient of t^s in prod_j (o_j t + z_j)
    q = np.zeros((n_leaves, width + 1, n))
    q[:, 0, :] = 1.0
    for p in range(width):
        # degrees above p + 1 are still zero
        zp = paths.z[:, p, None, None]
        q[:, 1 : p + 2, :] = zp * q[:, 1 : p + 2, :] + one[:, p, None, :] * q[:, : p + 1, :]
        q[:, 0, :] *= paths.z[:, p, None]

    # o_p = 1: divide out (t + z_p); o_p = 0: divide out the constant z_p
    total_one = paths.unwind @ q  # (L, D, n)
    total_zero = (paths.weights[:, None, :] @ q[:, :width, :]) / paths.z[:, :, None]
    total = np.where(one > 0, total_one, total_zero)
    contrib = total * (one - paths.z[:, :, None]) * paths.valid[:, :, None]  # (L, D, n)

    # scatter (leaf, slot) contributions onto features, per class
    rows = np.arange(n_leaves * width)
    scatter = sparse.csr_matrix(
        (paths.valid.ravel().astype(float), (rows, paths.feat.ravel())),
        shape=(n_leaves * width, n_features),
    )
    flat = contrib.reshape(n_leaves * width, n)
    leaf_of_slot = np.repeat(np.arange(n_leaves), width)
    for c in range(n_classes):
        weighted = flat * paths.value[leaf_of_slot, c][:, None]
        phi[:, :, c] = np.asarray(scatter.T @ weighted).T
    return phi


def tree_shap_tree(tree: DecisionTree, x, batch_size: int = 256) -> ShapAttribution:
    """SHAP values of one tree's class-probability output."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != tree.n_features:
        raise ValueError(f"expected {tree.n_features} features, got {x.shape[1]}")
    paths = _leaf_paths(tree)
    out = np.zeros((len(x), tree.n_features, tree.n_classes))
    for start in range(0, len(x), batch_size):
        out[start : start + batch_size] = _tree_shap_batch(paths, x[start : start + batch_size], tree.n_features)
    return ShapAttribution(out, paths.base.copy())


def tree_shap(model: ForestModel | DecisionTree, x, batch_size: int = 256) -> ShapAttribution:
    """TreeSHAP for a tree or a forest (mean over trees, as its prediction is).

    ``base + values.sum(axis=1)`` reproduces ``predict_proba(x)``.
    """
    if isinstance(model, DecisionTree):
        return tree_shap_tree(model, x, batch_size)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {x.shape[1]}")
    values = np.zeros((len(x), model.n_features, model.n_classes))
    base = np.zeros(model.n_classes)
    for tree in model.trees:
        a = tree_shap_tree(tree, x, batch_size)
        values += a.values
        base += a.base
    return ShapAttribution(values / model.n_trees, base / model.n_trees)
