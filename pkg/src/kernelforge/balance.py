"""Cluster-based oversampling (CBO) of a two-class training set.

Each class is clustered with k-means; every cluster is topped up by
sampling its own members with replacement until it matches the class's
largest cluster. The smaller class is then sampled uniformly (from its
cluster-balanced set) until both classes have the same count. Only copies
of existing rows are added.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import DataError, Dataset


@dataclass(frozen=True)
class CboConfig:
    k_per_class: int = 5
    kmeans_iters: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.k_per_class < 1:
            raise ValueError("k_per_class must be >= 1")
        if self.kmeans_iters < 1:
            raise ValueError("kmeans_iters must be >= 1")


def kmeans(X, k, n_iter=50, rng=None):
    """Lloyd's k-means with k-means++ seeding; returns per-row cluster ids.

    An empty cluster is re-seeded at the row farthest from its centre.
    """
    rng = np.random.default_rng(rng)
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    k = min(k, n)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        pick = rng.integers(n) if total == 0 else rng.choice(n, p=d2 / total)
        centers[c] = X[pick]
        d2 = np.minimum(d2, np.sum((X - centers[c]) ** 2, axis=1))

    labels = np.full(n, -1)
    for _ in range(n_iter):
        dist = np.sum((X[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new = np.argmin(dist, axis=1)
        own = dist[np.arange(n), new]
        for c in range(k):
            if not np.any(new == c):
                # farthest row among clusters that can spare one
                spare = np.bincount(new, minlength=k)[new] > 1
                far = int(np.argmax(np.where(spare, own, -1.0)))
                new[far] = c
                own[far] = -1.0
        if np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            centers[c] = X[labels == c].mean(axis=0)
    return labels


def cluster_balanced_rows(X, cfg: CboConfig, rng) -> np.ndarray:
    """Row positions after topping every cluster up to the largest one."""
    labels = kmeans(X, min(cfg.k_per_class, len(X)), cfg.kmeans_iters, rng)
    sizes = np.bincount(labels)
    target = sizes.max()
    rows = [np.arange(len(X))]
    for c in np.flatnonzero(sizes):
        members = np.flatnonzero(labels == c)
        extra = target - members.size
        if extra:
            rows.append(rng.choice(members, size=extra, replace=True))
    return np.concatenate(rows)


def cbo_oversample(train: Dataset, cfg: CboConfig = CboConfig()) -> Dataset:
    counts = train.class_counts()
    if min(counts.values()) == 0:
        raise DataError(f"CBO needs both classes, got {counts}")
    rng = np.random.default_rng(cfg.seed)
    per_class = {}
    for label in (1, -1):
        members = np.flatnonzero(train.y == label)
        per_class[label] = members[cluster_balanced_rows(train.X[members], cfg, rng)]
    big = max(per_class, key=lambda c: (per_class[c].size, c))
    small = -big
    gap = per_class[big].size - per_class[small].size
    if gap:
        per_class[small] = np.concatenate(
            [per_class[small], rng.choice(per_class[small], size=gap, replace=True)]
        )
    # each per-class list starts with that class's originals; keep the
    # originals in file order and append the copies
    copies = np.concatenate([per_class[1][counts[1]:], per_class[-1][counts[-1]:]])
    return train.take(np.concatenate([np.arange(len(train)), copies]))
