"""K-Means over keystroke features, multi-seed cluster sets, and
assignment-accuracy scoring against ground truth."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import KTooLarge, LengthMismatch
from .features import FeatureMatrix

DEFAULT_K = 27
MAX_ITERS = 300
KNEE_FLOOR = 1e-3


@dataclass(frozen=True, eq=False)
class Clustering:
    labels: tuple[int, ...]
    k: int
    inertia: float = 0.0
    seed: int | None = None
    history: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        labels = tuple(int(x) for x in self.labels)
        if any(not 0 <= x < self.k for x in labels):
            raise ValueError(f"labels must lie in [0, {self.k})")
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    def to_json(self) -> dict:
        return {"k": self.k, "seed": self.seed, "labels": list(self.labels),
                "inertia": self.inertia}

    @classmethod
    def from_json(cls, doc: dict) -> "Clustering":
        return cls(tuple(doc["labels"]), int(doc["k"]), float(doc.get("inertia", 0.0)),
                   doc.get("seed"))

    @classmethod
    def from_sequence(cls, symbols) -> "Clustering":
        """Cluster ids assigned by first appearance of each distinct symbol."""
        ids: dict = {}
        labels = [ids.setdefault(s, len(ids)) for s in symbols]
        return cls(tuple(labels), max(1, len(ids)))


@dataclass(frozen=True)
class ScoreSummary:
    median: float
    mean: float
    max: float
    min: float
    scores: tuple[float, ...] = field(default=(), compare=False)

    @classmethod
    def of(cls, scores) -> "ScoreSummary":
        s = np.asarray(list(scores), dtype=np.float64)
        if s.size == 0:
            raise ValueError("no scores to summarize")
        return cls(float(np.median(s)), float(s.mean()), float(s.max()), float(s.min()),
                   tuple(float(x) for x in s))

    def to_json(self) -> dict:
        return {"median": self.median, "mean": self.mean, "max": self.max, "min": self.min,
                "scores": list(self.scores)}

    @classmethod
    def from_json(cls, doc) -> "ScoreSummary":
        return cls(doc["median"], doc["mean"], doc["max"], doc["min"], tuple(doc.get("scores", ())))


def save_clusterings(path, clusterings) -> None:
    if isinstance(clusterings, Clustering):
        doc = clusterings.to_json()
    else:
        doc = [c.to_json() for c in clusterings]
    Path(path).write_text(json.dumps(doc, indent=1))


def load_clusterings(path) -> list[Clustering]:
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, dict):
        doc = [doc]
    return [Clustering.from_json(d) for d in doc]


def _rows(features) -> np.ndarray:
    if isinstance(features, FeatureMatrix):
        return features.rows
    x = np.asarray(features, dtype=np.float64)
    return x.reshape(-1, 1) if x.ndim == 1 else x


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (x ** 2).sum(axis=1)[:, None] - 2.0 * x @ centers.T + (centers ** 2).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(x, x[chosen]).min(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dists(x, x[idx:idx + 1])[:, 0])
    return x[chosen].copy()


def _update(x: np.ndarray, labels: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Cluster means; an empty cluster takes over the point farthest from its centre."""
    labels = labels.copy()
    while True:
        counts = np.bincount(labels, minlength=k)
        centers = np.zeros((k, x.shape[1]))
        np.add.at(centers, labels, x)
        nonempty = counts > 0
        centers[nonempty] /= counts[nonempty, None]
        empty = np.flatnonzero(~nonempty)
        if empty.size == 0:
            return centers, labels
        dist = ((x - centers[labels]) ** 2).sum(axis=1)
        # donors must keep at least one member
        dist[counts[labels] <= 1] = -1.0
        far = int(np.argmax(dist))
        if dist[far] < 0:
            return centers, labels
        labels[far] = empty[0]


def _inertia(x, labels, centers) -> float:
    return float(((x - centers[labels]) ** 2).sum())


def kmeans(features, k: int, seed: int = 0, max_iters: int = MAX_ITERS) -> Clustering:
    """Lloyd's algorithm from a k-means++ start.

    Runs until the assignment stops changing, inertia stops decreasing, or
    ``max_iters`` rounds. ``history`` holds the inertia after every update step.
    """
    x = _rows(features)
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > n:
        raise KTooLarge(f"k={k} exceeds {n} rows")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, k, rng)
    labels = np.argmin(_sq_dists(x, centers), axis=1)
    history = []
    for _ in range(max_iters):
        centers, labels = _update(x, labels, k)
        history.append(_inertia(x, labels, centers))
        # exact duplicates can bounce between tied centres without any gain
        if len(history) > 1 and history[-1] >= history[-2]:
            break
        new_labels = np.argmin(_sq_dists(x, centers), axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    else:
        centers, labels = _update(x, labels, k)
        history.append(_inertia(x, labels, centers))
    return Clustering(tuple(labels.tolist()), k, history[-1], seed, tuple(history))


def cluster_sets(features, k: int, count: int, base_seed: int = 0,
                 max_iters: int = MAX_ITERS) -> list[Clustering]:
    if count < 1:
        raise ValueError("count must be at least 1")
    return [kmeans(features, k, base_seed + i, max_iters) for i in range(count)]


def estimate_k(features, k_max: int = DEFAULT_K, seed: int = 0, restarts: int = 3) -> int:
    """Cluster count after which extra clusters stop paying off.

    Picks the k with the largest ratio inertia(k - 1) / inertia(k), each
    inertia the best of ``restarts`` seeds. Repeated keystrokes of one key sit
    close together, so inertia collapses once every key has its own cluster
    and barely moves afterwards.
    """
    x = _rows(features)
    n = x.shape[0]
    hi = min(k_max, n - 1)
    if hi < 2:
        return max(1, min(k_max, n))
    inertia = [kmeans(x, 1, seed).inertia]
    for k in range(2, hi + 1):
        inertia.append(min(kmeans(x, k, seed + r).inertia for r in range(restarts)))
    # once a split explains all but a sliver of the variance, further
    # splits only chase onset-alignment residue; the floor keeps their
    # ratios near 1
    eps = KNEE_FLOOR * max(inertia[0], 1e-300)
    ratios = [(inertia[i - 1] + eps) / (inertia[i] + eps) for i in range(1, len(inertia))]
    return 2 + int(np.argmax(ratios))


def contingency(labels, truth) -> tuple[np.ndarray, list]:
    keys = sorted(set(truth), key=str)
    col = {key: j for j, key in enumerate(keys)}
    k = max(labels) + 1 if len(labels) else 0
    table = np.zeros((k, len(keys)), dtype=np.int64)
    for lab, key in zip(labels, truth):
        table[lab, col[key]] += 1
    return table, keys


def score_clustering(c: Clustering | list, truth) -> float:
    """Best accuracy (percent) over injective cluster-to-key mappings."""
    labels = list(c.labels if isinstance(c, Clustering) else c)
    truth = list(truth)
    if len(labels) != len(truth):
        raise LengthMismatch(f"{len(labels)} labels vs {len(truth)} truth keys")
    if not labels:
        return 0.0
    table, _ = contingency(labels, truth)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return 100.0 * table[rows, cols].sum() / len(labels)
