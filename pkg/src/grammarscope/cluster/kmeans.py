"""Spherical mini-batch K-means.

Features are L2-normalized and compared by cosine distance
d(a, b) = 1 - a.b / (|a| |b|). Each iteration streams over all batches,
assigning every point to its nearest centroid and accumulating per-cluster
sums in float64; centroids become the re-normalized sums.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def normalize_rows(x: np.ndarray, what: str = "feature") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError(f"zero-norm {what} has no cosine distance")
    return x / norms


def assign(features: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid by cosine distance (lowest id on ties) and that distance."""
    sim = normalize_rows(features) @ normalize_rows(centroids, "centroid").T
    labels = np.argmax(sim, axis=1)
    return labels, 1.0 - sim[np.arange(len(labels)), labels]


@dataclass
class KMeansResult:
    centroids: np.ndarray  # (K, d), unit rows
    labels: list[np.ndarray]  # per batch
    objective: list[float] = field(default_factory=list)  # per assignment pass
    iterations: int = 0


def kmeans_pp(points: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding with cosine distance as the sampling weight."""
    n = len(points)
    centroids = [points[rng.integers(n)]]
    dist = 1.0 - points @ centroids[0]
    for _ in range(1, K):
        weights = np.clip(dist, 0.0, None)
        total = weights.sum()
        if total <= 0:
            # every point already coincides with a centre; fall back to uniform
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=weights / total)
        centroids.append(points[idx])
        dist = np.minimum(dist, 1.0 - points @ points[idx])
    return np.stack(centroids)


def minibatch_kmeans(
    batches,
    K: int,
    init="kmeans++",
    iters: int = 20,
    seed: int = 0,
) -> KMeansResult:
    """Cluster a list of (n_i, d) feature batches into K spherical clusters.

    ``init`` is "kmeans++" or an explicit (K, d) array. Stops after ``iters``
    assignment passes or once assignments no longer change. The objective
    trace records the summed cosine distance after each assignment pass and
    is non-increasing.
    """
    batches = [normalize_rows(np.reshape(b, (-1, np.shape(b)[-1]))) for b in batches]
    n = sum(len(b) for b in batches)
    if K < 1 or K > n:
        raise ValueError(f"K={K} must lie in [1, {n}] (number of feature vectors)")
    if iters < 1:
        raise ValueError("iters must be at least 1")
    rng = np.random.default_rng(seed)
    if isinstance(init, str):
        if init != "kmeans++":
            raise ValueError(f"unknown init {init!r}")
        centroids = kmeans_pp(np.concatenate(batches), K, rng)
    else:
        centroids = normalize_rows(np.asarray(init), "centroid")
        if centroids.shape != (K, batches[0].shape[1]):
            raise ValueError(f"init shape {centroids.shape} does not match K={K}, d={batches[0].shape[1]}")

    result = KMeansResult(centroids, [])
    previous = None
    for it in range(iters):
        sums = np.zeros_like(centroids)
        labels, dists, total = [], [], 0.0
        for b in batches:
            lab, dist = assign(b, centroids)
            labels.append(lab)
            dists.append(dist)
            total += float(dist.sum())
            np.add.at(sums, lab, b)
        result.objective.append(total)
        result.labels = labels
        result.centroids = centroids
        result.iterations = it + 1
        stable = previous is not None and all(np.array_equal(a, b) for a, b in zip(previous, labels))
        if stable or it == iters - 1:
            break
        previous = labels
        norms = np.linalg.norm(sums, axis=1)
        centroids = centroids.copy()
        alive = norms > 1e-12
        centroids[alive] = sums[alive] / norms[alive, None]
        dead = np.flatnonzero(~alive)
        if len(dead):
            # empty (or perfectly cancelling) clusters restart at the worst-served points
            order = np.argsort(-np.concatenate(dists), kind="stable")
            points = np.concatenate(batches)
            centroids[dead] = points[order[:len(dead)]]
    return result
