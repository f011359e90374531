"""k-means (k-means++ seeding, Lloyd iterations) and silhouette-based choice of k."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist


@dataclass
class Clustering:
    k: int
    centers: np.ndarray
    labels: np.ndarray
    inertia: float
    seed: int
    n_iter: int = 0
    inertia_history: list[float] = field(default_factory=list)

    def assignment(self, ids: Sequence[str]) -> dict[str, int]:
        return {pid: int(c) for pid, c in zip(ids, self.labels)}


@dataclass
class SilhouetteReport:
    scores: dict[int, float]
    best_k: int
    clusterings: dict[int, Clustering] = field(default_factory=dict, repr=False)


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return cdist(x, centers, "sqeuclidean")


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = _sq_dists(x, centers[0][None, :])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(x[idx])
        d2 = np.minimum(d2, _sq_dists(x, x[idx][None, :])[:, 0])
    return np.array(centers, dtype=float)


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int = 300):
    """Lloyd iterations from ``centers`` until the assignment stops changing.

    An emptied cluster is re-seeded at the point farthest from its current
    center. Returns ``(centers, labels, inertia, n_iter, history)``.
    """
    centers = np.array(centers, dtype=float)
    k = centers.shape[0]
    labels = None
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = _sq_dists(x, centers)
        new_labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(x)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=k)
        for c in np.flatnonzero(counts == 0):
            far = int(np.argmax(d2[np.arange(len(x)), labels]))
            labels[far] = c
            d2[far, :] = 0.0
            counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        centers = sums / counts[:, None]
    labels = np.argmin(_sq_dists(x, centers), axis=1)
    inertia = float(((x - centers[labels]) ** 2).sum())
    return centers, labels, inertia, n_iter, history


def kmeans(x, k: int, seed: int = 0, n_init: int = 10, max_iter: int = 300) -> Clustering:
    """Best-of-``n_init`` k-means on Euclidean distance.

    Each restart uses its own generator spawned from ``seed``, so the result
    is a pure function of ``(x, k, seed, n_init)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise ValueError(f"cannot form {k} clusters from {n} points")
    best = None
    for child in np.random.SeedSequence(seed).spawn(n_init):
        rng = np.random.default_rng(child)
        init = _kmeanspp(x, k, rng)
        result = _lloyd(x, init, max_iter)
        if best is None or result[2] < best[2]:
            best = result
    centers, labels, inertia, n_iter, history = best
    return Clustering(k, centers, labels, inertia, seed, n_iter, history)


def silhouette_samples(x, labels) -> np.ndarray:
    """Per-point ``(b - a) / max(a, b)``; singletons and ``a == b == 0`` give 0."""
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    uniq, inv = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        raise ValueError("silhouette needs at least two clusters")
    n = len(x)
    sizes = np.bincount(inv, minlength=len(uniq)).astype(float)
    out = np.zeros(n)
    chunk = max(1, 4_000_000 // max(n, 1))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        d = cdist(x[start:stop], x)
        sums = np.zeros((stop - start, len(uniq)))
        for c in range(len(uniq)):
            sums[:, c] = d[:, inv == c].sum(axis=1)
        own = inv[start:stop]
        rows = np.arange(stop - start)
        own_size = sizes[own]
        with np.errstate(invalid="ignore", divide="ignore"):
            a = np.where(own_size > 1, sums[rows, own] / (own_size - 1), 0.0)
            means = sums / sizes[None, :]
        means[rows, own] = np.inf
        b = means.min(axis=1)
        denom = np.maximum(a, b)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(denom > 0, (b - a) / denom, 0.0)
        s[own_size <= 1] = 0.0
        out[start:stop] = s
    return out


def silhouette(x, labels) -> float:
    """Mean silhouette coefficient over all points."""
    return float(np.mean(silhouette_samples(x, labels)))


def select_k(x, k_range: Iterable[int] = range(2, 13), seed: int = 0, n_init: int = 10) -> SilhouetteReport:
    """Run k-means for every k and keep the silhouette argmax (ties -> smaller k)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    ks = sorted(set(k_range))
    if not ks or ks[0] < 2 or ks[-1] > n - 1:
        raise ValueError(f"k range must lie within [2, {n - 1}]")
    scores, fits = {}, {}
    for k in ks:
        fit = kmeans(x, k, seed=seed, n_init=n_init)
        fits[k] = fit
        scores[k] = silhouette(x, fit.labels)
    best_k = max(ks, key=lambda k: (scores[k], -k))
    return SilhouetteReport(scores, best_k, fits)
