"""Turning partial recoveries into guess lists: exact combination counts and
cheapest-first enumeration against a verification oracle."""

from __future__ import annotations

import heapq
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Sequence

from .demodulation import RecoveryResult, Status, Wordlist


@dataclass(frozen=True)
class CandidateSets:
    """Per-position candidate words, most likely first.

    An OPEN position has no candidates of its own and ranges over ``universe``
    (the wordlist entries, in wordlist order).
    """
    positions: tuple[tuple[str, ...], ...]
    open: tuple[bool, ...]
    universe: tuple[str, ...] = ()

    def __post_init__(self):
        positions = tuple(tuple(dict.fromkeys(p)) for p in self.positions)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "open", tuple(bool(o) for o in self.open))
        object.__setattr__(self, "universe", tuple(self.universe))
        if len(self.open) != len(positions):
            raise ValueError("open flags must match position count")
        for p, is_open in zip(positions, self.open):
            if is_open and p:
                raise ValueError("an OPEN position carries no candidates")
            if not is_open and not p:
                raise ValueError("a closed position needs at least one candidate")
        if any(self.open) and not self.universe:
            raise ValueError("OPEN positions need a non-empty universe")

    def __len__(self):
        return len(self.positions)

    def choices(self, i: int) -> tuple[str, ...]:
        return self.universe if self.open[i] else self.positions[i]

    def sizes(self) -> list[int]:
        return [len(self.choices(i)) for i in range(len(self))]

    def to_json(self) -> dict:
        return {"positions": [list(p) for p in self.positions], "open": list(self.open),
                "universe_size": len(self.universe)}


@dataclass(frozen=True)
class CombinationBudget:
    count: int
    log2_exponent: float

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be at least 1")

    @classmethod
    def of(cls, count: int) -> "CombinationBudget":
        count = int(count)
        return cls(count, math.log2(count) if count >= 1 else float("nan"))


@dataclass(frozen=True)
class Outcome:
    found: bool
    attempts: int
    guess: tuple[str, ...] | None = None

    def to_json(self) -> dict:
        return {"outcome": "found" if self.found else "exhausted",
                "attempts": self.attempts, "guess": list(self.guess) if self.guess else None}


def candidate_sets(merged: RecoveryResult, wl: Wordlist) -> CandidateSets:
    """FULL positions keep their word, PARTIAL positions their ranked
    candidates, NONE positions become OPEN."""
    if not merged.positions:
        raise ValueError("recovery has no positions")
    positions, flags = [], []
    for p in merged.positions:
        if p.status is Status.FULL:
            positions.append((p.candidates[0],))
            flags.append(False)
        elif p.status is Status.PARTIAL and p.candidates:
            positions.append(rank_candidates(p.candidates, p.support, p.distance))
            flags.append(False)
        else:
            positions.append(())
            flags.append(True)
    return CandidateSets(tuple(positions), tuple(flags), wl.entries)


def rank_candidates(candidates, support: dict | None = None,
                    distance: dict | None = None) -> tuple[str, ...]:
    """Most supported first, then smallest correction distance, then alphabetical."""
    support = support or {}
    distance = distance or {}
    return tuple(sorted(dict.fromkeys(candidates),
                        key=lambda w: (-support.get(w, 1), distance.get(w, 0), w)))


def naive_count(cs: CandidateSets) -> CombinationBudget:
    return CombinationBudget.of(math.prod(cs.sizes()))


def rank_vectors(sizes: Sequence[int]) -> Iterator[tuple[int, ...]]:
    """All rank vectors of the product, by rank sum and then lexicographically.

    Each vector is reached from exactly one parent (decrement its last nonzero
    entry), so the frontier never holds duplicates. Every vector of cost c is
    pushed while cost c - 1 is being popped, hence the heap order is the
    full (cost, vector) order.
    """
    sizes = list(sizes)
    if any(s < 1 for s in sizes):
        return
    start = (0,) * len(sizes)
    heap = [(0, start)]
    while heap:
        cost, vec = heapq.heappop(heap)
        yield vec
        last = max((i for i, r in enumerate(vec) if r), default=0)
        for i in range(last, len(vec)):
            if vec[i] + 1 < sizes[i]:
                child = vec[:i] + (vec[i] + 1,) + vec[i + 1:]
                heapq.heappush(heap, (cost + 1, child))


def iter_guesses(cs: CandidateSets, ranking: Sequence[Sequence[str]] | None = None) -> Iterator[tuple[str, ...]]:
    ranking = _check_ranking(cs, ranking)
    for vec in rank_vectors([len(r) for r in ranking]):
        yield tuple(ranking[i][r] for i, r in enumerate(vec))


def prioritized_enumerate(cs: CandidateSets, budget: int, oracle: Callable[[tuple[str, ...]], bool],
                          ranking: Sequence[Sequence[str]] | None = None) -> Outcome:
    """Ask ``oracle`` about guesses cheapest first, at most ``budget`` times."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    attempts = 0
    for guess in iter_guesses(cs, ranking):
        if attempts >= budget:
            break
        attempts += 1
        if oracle(guess):
            return Outcome(True, attempts, guess)
    return Outcome(False, attempts)


def _check_ranking(cs: CandidateSets, ranking) -> list[tuple[str, ...]]:
    if ranking is None:
        return [cs.choices(i) for i in range(len(cs))]
    ranking = [tuple(r) for r in ranking]
    if len(ranking) != len(cs):
        raise ValueError("ranking must cover every position")
    for i, r in enumerate(ranking):
        if len(set(r)) != len(r) or set(r) != set(cs.choices(i)):
            raise ValueError(f"ranking at position {i} must order exactly its candidates")
    return ranking


def truth_oracle(truth) -> Callable[[tuple[str, ...]], bool]:
    target = tuple(truth.split() if isinstance(truth, str) else truth)
    return lambda guess: tuple(guess) == target


def parse_budget(text: str | int) -> int:
    """Accept ``1000``, ``2^32``, ``2**32`` or ``1e6``."""
    if isinstance(text, int):
        value = text
    else:
        s = text.strip().replace(" ", "")
        m = re.fullmatch(r"(\d+)(?:\^|\*\*)(\d+)", s)
        if m:
            value = int(m.group(1)) ** int(m.group(2))
        elif re.fullmatch(r"\d+", s):
            value = int(s)
        elif re.fullmatch(r"\d+(?:\.\d+)?[eE]\d+", s):
            value = int(float(s))
        else:
            raise ValueError(f"cannot parse budget {text!r}")
    if value < 1:
        raise ValueError("budget must be at least 1")
    return value


def combine(merged: RecoveryResult, wl: Wordlist, budget: int | None = None,
            truth=None) -> dict:
    """Count and, when a truth is given, run the prioritized search."""
    cs = candidate_sets(merged, wl)
    total = naive_count(cs)
    doc = {"count": str(total.count), "exponent": total.log2_exponent,
           "sizes": cs.sizes(), "open": list(cs.open)}
    if truth is not None:
        outcome = prioritized_enumerate(cs, budget or total.count, truth_oracle(truth))
        doc.update(outcome.to_json())
        doc["attempts_exponent"] = math.log2(outcome.attempts) if outcome.attempts else None
    return doc


def save_combine(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=1))
