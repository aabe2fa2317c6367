import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from keyclink.clustering import (Clustering, ScoreSummary, cluster_sets, estimate_k, kmeans,
                                 load_clusterings, save_clusterings, score_clustering)
from keyclink.errors import KTooLarge, LengthMismatch


def brute_force_inertia(x, k):
    best = np.inf
    for labels in itertools.product(range(k), repeat=len(x)):
        labels = np.array(labels)
        if len(set(labels)) < k:
            continue
        total = sum(((x[labels == j] - x[labels == j].mean(0)) ** 2).sum() for j in range(k))
        best = min(best, total)
    return best


def brute_force_score(labels, truth):
    keys = sorted(set(truth))
    ids = sorted(set(labels))
    best = 0
    for perm in itertools.permutations(keys + [None] * len(ids), len(ids)):
        m = dict(zip(ids, perm))
        best = max(best, sum(m[l] == t for l, t in zip(labels, truth)))
    return 100.0 * best / len(truth)


def partition(labels):
    return {frozenset(i for i, l in enumerate(labels) if l == c) for c in set(labels)}


def test_k1():
    x = np.random.default_rng(0).normal(size=(20, 3))
    c = kmeans(x, 1, seed=4)
    assert set(c.labels) == {0}
    assert c.inertia == pytest.approx(((x - x.mean(0)) ** 2).sum())


def test_two_clouds():
    rng = np.random.default_rng(1)
    x = np.vstack([rng.normal(size=(15, 2)), rng.normal(size=(10, 2)) + 100])
    c = kmeans(x, 2, seed=0)
    assert partition(c.labels) == {frozenset(range(15)), frozenset(range(15, 25))}


def test_matches_exhaustive_optimum():
    x = np.random.default_rng(2).normal(size=(8, 2))
    best = min(kmeans(x, 3, seed=s).inertia for s in range(50))
    assert best == pytest.approx(brute_force_inertia(x, 3), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 40), st.integers(1, 6), st.integers(0, 2 ** 31))
def test_inertia_non_increasing(n, k, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    c = kmeans(x, min(k, n), seed=seed)
    h = c.history
    assert all(b <= a + 1e-9 * max(1.0, a) for a, b in zip(h, h[1:]))
    assert len(set(c.labels)) == min(k, n)


def test_deterministic_and_k_too_large():
    x = np.random.default_rng(3).normal(size=(30, 4))
    assert kmeans(x, 5, seed=9).labels == kmeans(x, 5, seed=9).labels
    with pytest.raises(KTooLarge):
        kmeans(x, 31)


def test_duplicates_keep_k_clusters():
    x = np.repeat(np.eye(3), 4, axis=0)
    c = kmeans(x, 5, seed=0)
    assert len(set(c.labels)) == 5


def test_cluster_sets():
    rng = np.random.default_rng(4)
    x = np.vstack([rng.normal(size=(8, 2)) + 50 * j for j in range(4)])
    sets = cluster_sets(x, 4, 10, base_seed=3)
    assert [c.seed for c in sets] == list(range(3, 13))
    assert sets[0].labels == kmeans(x, 4, seed=3).labels
    assert len({frozenset(partition(c.labels)) for c in sets}) == 1
    again = cluster_sets(x, 4, 10, base_seed=3)
    assert [c.labels for c in again] == [c.labels for c in sets]


def test_estimate_k_on_blobs():
    rng = np.random.default_rng(5)
    for k in (3, 6, 11):
        x = np.vstack([rng.normal(scale=0.05, size=(4, 5)) + rng.normal(scale=10, size=5) for _ in range(k)])
        assert estimate_k(x) == k


def test_score_examples():
    assert score_clustering([0, 0, 0, 1, 2], list("aabbc")) == pytest.approx(80.0)
    assert score_clustering([2, 2, 0, 1], list("xxyz")) == 100.0
    with pytest.raises(LengthMismatch):
        score_clustering([0, 1], ["a"])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.sampled_from("abcd")), min_size=1, max_size=9),
       st.permutations(range(4)))
def test_score_oracle_and_relabel_invariance(pairs, perm):
    labels = [p[0] for p in pairs]
    truth = [p[1] for p in pairs]
    s = score_clustering(labels, truth)
    assert s == pytest.approx(brute_force_score(labels, truth))
    assert score_clustering([perm[l] for l in labels], truth) == pytest.approx(s)


def test_clusters_json(tmp_path):
    c = Clustering((0, 1, 1, 2), 3, 1.5, 7)
    save_clusterings(tmp_path / "one.json", c)
    assert load_clusterings(tmp_path / "one.json")[0].labels == c.labels
    save_clusterings(tmp_path / "many.json", [c, c])
    back = load_clusterings(tmp_path / "many.json")
    assert len(back) == 2 and back[1].to_json() == c.to_json()
    assert set(c.to_json()) == {"k", "seed", "labels", "inertia"}


def test_labels_validated():
    with pytest.raises(ValueError):
        Clustering((0, 3), 3)


def test_score_summary():
    s = ScoreSummary.of([80, 90, 100])
    assert (s.median, s.mean, s.max, s.min) == (90, 90, 100, 80)
    one = ScoreSummary.of([42.0])
    assert one.median == one.mean == one.max == one.min == 42.0
