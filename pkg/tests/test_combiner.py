import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from keyclink.combiner import (CandidateSets, CombinationBudget, candidate_sets, combine,
                               iter_guesses, naive_count, parse_budget, prioritized_enumerate,
                               rank_candidates, rank_vectors, truth_oracle)
from keyclink.demodulation import PositionResult, RecoveryResult, Status


def closed(*sizes):
    return CandidateSets(tuple(tuple(f"w{i}_{j}" for j in range(n)) for i, n in enumerate(sizes)),
                         (False,) * len(sizes))


def exact_order(sizes):
    """Reference order: every vector of the product sorted by (rank sum, vector)."""
    vecs = itertools.product(*(range(n) for n in sizes))
    return sorted(vecs, key=lambda v: (sum(v), v))


def test_sizes_234():
    b = naive_count(closed(2, 3, 4))
    assert b.count == 24 == len(list(iter_guesses(closed(2, 3, 4))))
    assert b.log2_exponent == pytest.approx(math.log2(24), abs=1e-9)


def test_all_full(wl):
    r = RecoveryResult(tuple(PositionResult(Status.FULL, (w,)) for w in ("taco", "ferret")))
    cs = candidate_sets(r, wl)
    assert cs.sizes() == [1, 1]
    assert naive_count(cs) == CombinationBudget(1, 0.0)


def test_none_position_is_wordlist(wl):
    r = RecoveryResult((PositionResult(Status.FULL, ("taco",)), PositionResult(Status.NONE, ()),
                        PositionResult(Status.PARTIAL, ("cycle", "circle", "cycle"))))
    cs = candidate_sets(r, wl)
    assert cs.open == (False, True, False)
    assert cs.sizes() == [1, 7776, 2]
    assert naive_count(cs).count == 7776 * 2


def test_three_open_exponent(wl):
    r = RecoveryResult((PositionResult(Status.NONE, ()),) * 3)
    b = naive_count(candidate_sets(r, wl))
    assert b.count == 7776 ** 3
    assert abs(b.log2_exponent - 38.77) <= 0.01


def test_budget_invariant():
    with pytest.raises(ValueError):
        CombinationBudget.of(0)
    big = CombinationBudget.of(7776 ** 10)
    assert big.count == 7776 ** 10 and big.log2_exponent == pytest.approx(10 * math.log2(7776))


def test_rank_candidates():
    assert rank_candidates(["b", "a", "c"], {"c": 3}, {"a": 1}) == ("c", "b", "a")


def test_two_by_two_order():
    assert list(rank_vectors([2, 2])) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    cs = CandidateSets((("a", "b"), ("c", "d")), (False, False))
    assert prioritized_enumerate(cs, 10, truth_oracle("a c")).attempts == 1
    assert prioritized_enumerate(cs, 10, truth_oracle("a d")).attempts == 2
    # (second, first) ties with (first, second) on cost and loses the lexicographic tie-break
    assert prioritized_enumerate(cs, 10, truth_oracle("b c")).attempts == 3


def test_exhausted():
    cs = closed(3, 3)
    truth = tuple(cs.positions[i][2] for i in range(2))
    out = prioritized_enumerate(cs, 4, truth_oracle(truth))
    assert not out.found and out.attempts == 4
    assert out.to_json()["outcome"] == "exhausted"
    out = prioritized_enumerate(cs, 100, lambda g: False)
    assert out.attempts == 9


def test_custom_ranking():
    cs = CandidateSets((("a", "b"),), (False,))
    assert list(iter_guesses(cs, [("b", "a")])) == [("b",), ("a",)]
    with pytest.raises(ValueError):
        list(iter_guesses(cs, [("b", "x")]))


def test_streams_huge_products(wl):
    r = RecoveryResult((PositionResult(Status.NONE, ()),) * 6)
    guesses = iter_guesses(candidate_sets(r, wl))
    first = [next(guesses) for _ in range(3)]
    assert first[0] == (wl.entries[0],) * 6
    assert first[1] == (wl.entries[0],) * 5 + (wl.entries[1],)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 12), min_size=1, max_size=5))
def test_naive_count_matches_enumeration(sizes):
    if math.prod(sizes) > 10 ** 5:
        return
    cs = closed(*sizes)
    assert naive_count(cs).count == sum(1 for _ in itertools.product(*cs.positions))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 8), min_size=1, max_size=4), st.data())
def test_order_and_attempts(sizes, data):
    order = list(rank_vectors(sizes))
    assert order == exact_order(sizes)
    cs = closed(*sizes)
    idx = data.draw(st.integers(0, len(order) - 1))
    truth = tuple(cs.positions[i][r] for i, r in enumerate(order[idx]))
    out = prioritized_enumerate(cs, naive_count(cs).count, truth_oracle(truth))
    assert out.found and out.attempts == idx + 1 <= naive_count(cs).count
    if sum(order[idx]) < sum(n - 1 for n in sizes):
        assert out.attempts < naive_count(cs).count


def test_parse_budget():
    assert parse_budget("2^32") == parse_budget("2**32") == 2 ** 32
    assert parse_budget("1000") == 1000 and parse_budget("1e6") == 10 ** 6
    for bad in ("0", "two", "-4"):
        with pytest.raises(ValueError):
            parse_budget(bad)


def test_combine_doc(wl):
    r = RecoveryResult((PositionResult(Status.FULL, ("taco",)),
                        PositionResult(Status.PARTIAL, ("ferret", "fervor"), support={"fervor": 2})))
    doc = combine(r, wl, truth="taco ferret")
    assert doc["count"] == "2" and doc["outcome"] == "found" and doc["attempts"] == 2
    assert combine(r, wl)["exponent"] == 1.0
