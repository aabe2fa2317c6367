"""Dictionary attack on cluster-label sequences.

Cluster ids act as a substitution cipher over the typed letters. Words are
found between delimiter clusters, matched to dictionary words sharing their
same-letter structure, and solved jointly so one injective cluster-to-letter
mapping explains every demodulated word. Words that cannot be fitted are
resubstituted with the mapping and repaired by a Hamming-distance lookup.
"""

from __future__ import annotations

import enum
import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from .clustering import Clustering
from .errors import EmptyWordlist, MalformedLine, NoSolution, NoWords

WILDCARD = "?"
SOLUTION_CAP = 50
DELIMITER_TRIES = 3

_LINE = re.compile(r"^(?:(\d+)\s+)?([A-Za-z][A-Za-z'-]*)$")


def pattern(seq) -> tuple[int, ...]:
    """Canonical same-symbol pattern: ids by first appearance ("level" -> 0,1,2,1,0)."""
    ids: dict = {}
    return tuple(ids.setdefault(s, len(ids)) for s in seq)


def typed_form(entry: str) -> str:
    """Letters an entry leaves in a keystroke stream over the a-z alphabet."""
    return entry.lower().replace("-", "").replace("'", "")


@dataclass(frozen=True, eq=False)
class Wordlist:
    """Typed word forms (letters only) plus the original entries.

    ``entries`` keeps spellings such as "yo-yo" next to "yoyo": both type the
    same letters but are different passphrase words, so guessing enumerates
    entries while demodulation works on ``words``.
    """
    words: tuple[str, ...]
    entries: tuple[str, ...] = ()

    def __post_init__(self):
        words = tuple(sorted(set(self.words)))
        if not words:
            raise EmptyWordlist("wordlist has no words")
        bad = [w for w in words if not re.fullmatch(r"[a-z]+", w)]
        if bad:
            raise ValueError(f"words must match [a-z]+: {bad[:3]}")
        entries = tuple(sorted(set(self.entries))) if self.entries else words
        if {typed_form(e) for e in entries} != set(words):
            raise ValueError("entries must type exactly the given words")
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self._set

    @cached_property
    def _set(self):
        return frozenset(self.words)

    @property
    def min_len(self) -> int:
        return min(len(w) for w in self.words)

    @property
    def max_len(self) -> int:
        return max(len(w) for w in self.words)

    @cached_property
    def index_by_length(self) -> dict[int, tuple[str, ...]]:
        out = defaultdict(list)
        for w in self.words:
            out[len(w)].append(w)
        return {n: tuple(ws) for n, ws in out.items()}

    @cached_property
    def index_by_pattern(self) -> dict[tuple[int, ...], tuple[str, ...]]:
        out = defaultdict(list)
        for w in self.words:
            out[pattern(w)].append(w)
        return {p: tuple(ws) for p, ws in out.items()}

    @cached_property
    def _letter_arrays(self) -> dict[int, np.ndarray]:
        return {n: np.frombuffer("".join(ws).encode(), dtype=np.uint8).reshape(len(ws), n)
                for n, ws in self.index_by_length.items()}


def load_wordlist(path=None) -> Wordlist:
    """Read a word-per-line or Diceware ``NNNNN<tab>word`` list.

    Dice numbers are dropped and words lowercased. The typed form of an entry
    loses its hyphens, which sit on a key outside the attacked alphabet; the
    original spellings stay available as ``entries``. With no path, the
    bundled EFF large wordlist is used.
    """
    if path is None:
        text = resources.files("keyclink.data").joinpath("eff_large_wordlist.txt").read_text()
    else:
        text = Path(path).read_text()
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _LINE.match(line)
        if not m:
            raise MalformedLine(lineno, raw)
        entry = m.group(2).lower()
        if not typed_form(entry):
            raise MalformedLine(lineno, raw)
        entries.append(entry)
    if not entries:
        raise EmptyWordlist(f"{path or 'bundled wordlist'} contains no words")
    return Wordlist(tuple(typed_form(e) for e in entries), tuple(entries))


@dataclass(frozen=True, eq=False)
class RelationMatrix:
    n: int
    bits: np.ndarray

    def __eq__(self, other):
        return isinstance(other, RelationMatrix) and self.n == other.n and \
            np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.n, self.bits.tobytes()))


def relation_matrix(seq) -> RelationMatrix:
    seq = list(seq)
    if not seq:
        raise ValueError("relation matrix needs a non-empty sequence")
    ids = np.array(pattern(seq))
    bits = (ids[:, None] == ids[None, :]).astype(np.uint8)
    bits.flags.writeable = False
    return RelationMatrix(len(seq), bits)


@dataclass(frozen=True)
class ClusterWord:
    ids: tuple[int, ...]
    position: int = 0

    def __len__(self):
        return len(self.ids)


def delimiter_candidates(c: Clustering | list, expected_words: int | None = None) -> list[int]:
    """Cluster ids by descending size; with ``expected_words = n``, ids seen
    exactly ``n - 1`` times move to the front."""
    labels = list(c.labels if isinstance(c, Clustering) else c)
    if not labels:
        raise ValueError("empty clustering")
    counts = Counter(labels)
    order = sorted(counts, key=lambda i: (-counts[i], i))
    if expected_words:
        order = ([i for i in order if counts[i] == expected_words - 1]
                 + [i for i in order if counts[i] != expected_words - 1])
    return order


def split_into_words(c: Clustering | list, delimiter_id: int) -> list[ClusterWord]:
    labels = list(c.labels if isinstance(c, Clustering) else c)
    runs, current = [], []
    for lab in labels:
        if lab == delimiter_id:
            if current:
                runs.append(current)
            current = []
        else:
            current.append(lab)
    if current:
        runs.append(current)
    if not runs:
        raise NoWords(f"every label is the delimiter {delimiter_id}")
    return [ClusterWord(tuple(r), i) for i, r in enumerate(runs)]


def _consistent(ids, word, mapping, used) -> bool:
    for cid, letter in zip(ids, word):
        mapped = mapping.get(cid)
        if mapped is None:
            if letter in used:
                return False
        elif mapped != letter:
            return False
    return True


def word_candidates(w: ClusterWord | tuple, wl: Wordlist, mapping: dict | None = None) -> list[str]:
    """Dictionary words with the cluster word's same-letter structure that
    agree with ``mapping`` and keep it injective. Lexicographic order."""
    ids = tuple(w.ids if isinstance(w, ClusterWord) else w)
    base = wl.index_by_pattern.get(pattern(ids), ())
    if not mapping:
        return list(base)
    used = set(mapping.values())
    return [word for word in base if _consistent(ids, word, mapping, used)]


@dataclass(frozen=True, eq=False)
class DemodResult:
    mapping: dict
    demodulated: dict
    undemodulated: frozenset
    solutions: tuple
    unique: dict = field(default_factory=dict)
    exhaustive: bool = True


class _Search:
    """Depth-first search in position order with forward checking.

    The partial mapping lives in an array (cluster id -> letter code, -1 when
    unmapped) plus a used-letter table, so candidate filtering for a position
    is one vectorized test over its pattern-matched words.
    """

    def __init__(self, words: list[ClusterWord], wl: Wordlist):
        self.ids = [tuple(w.ids) for w in words]
        self.base = [wl.index_by_pattern.get(pattern(ids), ()) for ids in self.ids]
        self.cols = [np.asarray(ids, dtype=np.int64) for ids in self.ids]
        self.letters = [
            (np.frombuffer("".join(b).encode(), dtype=np.uint8).reshape(len(b), len(ids)) - ord("a")).astype(np.int64)
            if b else np.zeros((0, len(ids)), dtype=np.int64)
            for b, ids in zip(self.base, self.ids)]
        self.n_ids = max((max(ids) for ids in self.ids if ids), default=-1) + 1

    def _mask(self, pos, codes, used):
        arr = self.letters[pos]
        mapped = codes[self.cols[pos]]
        ok = np.where(mapped >= 0, arr == mapped, ~used[arr])
        return ok.all(axis=1)

    def _cands(self, pos, codes, used):
        return [self.base[pos][i] for i in np.flatnonzero(self._mask(pos, codes, used))]

    def _dead_after(self, pos, codes, used, limit):
        """True when more than ``limit`` later positions lost every candidate."""
        dead = 0
        for q in range(pos + 1, len(self.ids)):
            if not self._mask(q, codes, used).any():
                dead += 1
                if dead > limit:
                    return True
        return False

    def run(self, skips: int, cap: int, fixed: dict | None = None, exclude: dict | None = None):
        """Solutions with at most ``skips`` skipped positions, lexicographic,
        skip ordered after every word. ``fixed``/``exclude`` pin or forbid a
        word at a position (a pinned position cannot be skipped)."""
        fixed = fixed or {}
        exclude = exclude or {}
        found: list[tuple] = []
        chosen: list = [None] * len(self.ids)

        def extend(pos, word, codes, used):
            codes = codes.copy()
            used = used.copy()
            for cid, letter in zip(self.ids[pos], word):
                if codes[cid] < 0:
                    code = ord(letter) - ord("a")
                    codes[cid] = code
                    used[code] = True
            return codes, used

        def dfs(pos, codes, used, skips_left):
            if len(found) >= cap:
                return
            if pos == len(self.ids):
                mapping = {cid: chr(int(code) + ord("a")) for cid, code in enumerate(codes) if code >= 0}
                found.append((tuple(chosen), mapping))
                return
            for word in self._cands(pos, codes, used):
                if pos in fixed and word != fixed[pos]:
                    continue
                if word == exclude.get(pos):
                    continue
                new_codes, new_used = extend(pos, word, codes, used)
                if self._dead_after(pos, new_codes, new_used, skips_left):
                    continue
                chosen[pos] = word
                dfs(pos + 1, new_codes, new_used, skips_left)
                chosen[pos] = None
                if len(found) >= cap:
                    return
            if skips_left > 0 and pos not in fixed and pos not in exclude:
                if not self._dead_after(pos, codes, used, skips_left - 1):
                    dfs(pos + 1, codes, used, skips_left - 1)

        dfs(0, np.full(self.n_ids, -1, dtype=np.int64), np.zeros(26, dtype=bool), skips)
        return found


def joint_demodulate(words: list[ClusterWord], wl: Wordlist, solution_cap: int = SOLUTION_CAP) -> DemodResult:
    """Assign dictionary words to cluster words under one injective mapping.

    Positions that fit no consistent word are skipped (the undemodulated set);
    the fewest possible are skipped. Solutions are ranked lexicographically
    and truncated at ``solution_cap``; the reported mapping is the top one's.
    For each demodulated position ``unique`` records whether no solution with
    the same number of skips places a different word there.
    """
    if not words:
        raise ValueError("no words to demodulate")
    if solution_cap < 1:
        raise ValueError("solution_cap must be at least 1")
    search = _Search(words, wl)
    m = len(words)
    for skips in range(m):
        found = search.run(skips, solution_cap)
        if found:
            break
    else:
        raise NoSolution("no position can be demodulated")

    exhaustive = len(found) < solution_cap
    top_words, top_map = found[0]
    demodulated: dict[int, list[str]] = {}
    unique: dict[int, bool] = {}
    for pos in range(m):
        seen = sorted({sol[pos] for sol, _ in found if sol[pos] is not None})
        if top_words[pos] is None:
            continue
        demodulated[pos] = seen
        if len(seen) > 1:
            unique[pos] = False
        elif exhaustive:
            unique[pos] = True
        else:
            alt = search.run(skips, 1, exclude={pos: top_words[pos]})
            unique[pos] = not alt
    undemod = frozenset(p for p in range(m) if top_words[p] is None)
    return DemodResult(
        mapping=dict(top_map),
        demodulated=demodulated,
        undemodulated=undemod,
        solutions=tuple(sol for sol, _ in found),
        unique=unique,
        exhaustive=exhaustive,
    )


def resubstitute(undemodulated: ClusterWord | tuple, mapping: dict) -> str:
    ids = undemodulated.ids if isinstance(undemodulated, ClusterWord) else undemodulated
    return "".join(mapping.get(i, WILDCARD) for i in ids)


def hamming_allowance(length: int) -> int:
    """Mismatches a dictionary lookup may repair in a word of ``length``
    letters; lengths past 9 keep the 7-9 allowance."""
    if length < 1:
        raise ValueError("length must be positive")
    if length <= 2:
        return 0
    if length <= 4:
        return 1
    if length <= 6:
        return 2
    return 3


def hamming_candidates(partial: str, wl: Wordlist) -> list[tuple[str, int]]:
    """(word, distance) pairs within the allowance, sorted by distance then word.
    Wildcards match any letter at no cost."""
    n = len(partial)
    words = wl.index_by_length.get(n)
    if not words:
        return []
    arr = wl._letter_arrays[n]
    probe = np.frombuffer(partial.encode(), dtype=np.uint8)
    known = probe != ord(WILDCARD)
    dist = ((arr != probe) & known).sum(axis=1)
    hits = np.flatnonzero(dist <= hamming_allowance(n))
    return sorted(((words[i], int(dist[i])) for i in hits), key=lambda p: (p[1], p[0]))


def hamming_correct(partial: str, wl: Wordlist) -> list[str]:
    return [w for w, _ in hamming_candidates(partial, wl)]


class Status(str, enum.Enum):
    FULL = "FULL"
    PARTIAL = "PARTIAL"
    NONE = "NONE"


@dataclass(frozen=True)
class PositionResult:
    status: Status
    candidates: tuple[str, ...] = ()
    # candidate -> number of cluster sets that proposed it
    support: dict = field(default_factory=dict, compare=False)
    # candidate -> Hamming distance from its partial word (0 when demodulated)
    distance: dict = field(default_factory=dict, compare=False)
    partial: str | None = None

    @property
    def word(self) -> str | None:
        return self.candidates[0] if self.status is Status.FULL else None

    def to_json(self) -> dict:
        return {"status": self.status.value, "candidates": list(self.candidates),
                "support": self.support, "distance": self.distance, "partial": self.partial}

    @classmethod
    def from_json(cls, doc) -> "PositionResult":
        return cls(Status(doc["status"]), tuple(doc.get("candidates", ())),
                   dict(doc.get("support", {})), dict(doc.get("distance", {})), doc.get("partial"))


@dataclass(frozen=True)
class RecoveryResult:
    positions: tuple[PositionResult, ...]
    delimiter_id: int | None = None
    cluster_set_id: int | None = None
    members: int = 1

    @property
    def words_recovered(self) -> int:
        return sum(p.status is Status.FULL for p in self.positions)

    @property
    def partial_count(self) -> int:
        return sum(p.status is Status.PARTIAL for p in self.positions)

    @property
    def full_words(self) -> list[str | None]:
        return [p.word for p in self.positions]

    def is_full(self) -> bool:
        return bool(self.positions) and self.words_recovered == len(self.positions)

    def to_json(self) -> dict:
        return {
            "delimiter_id": self.delimiter_id,
            "cluster_set_id": self.cluster_set_id,
            "members": self.members,
            "words_recovered": self.words_recovered,
            "positions": [p.to_json() for p in self.positions],
        }

    @classmethod
    def from_json(cls, doc) -> "RecoveryResult":
        return cls(tuple(PositionResult.from_json(p) for p in doc["positions"]),
                   doc.get("delimiter_id"), doc.get("cluster_set_id"), doc.get("members", 1))


def _recover_with(words, wl, cap) -> tuple[PositionResult, ...]:
    try:
        demod = joint_demodulate(words, wl, cap)
        mapping, skipped = demod.mapping, demod.undemodulated
    except NoSolution:
        demod, mapping, skipped = None, {}, frozenset(range(len(words)))
    out = []
    for pos, w in enumerate(words):
        if pos not in skipped:
            cands = tuple(demod.demodulated[pos])
            status = Status.FULL if demod.unique[pos] and len(cands) == 1 else Status.PARTIAL
            out.append(PositionResult(status, cands, {c: 1 for c in cands}, {c: 0 for c in cands}))
            continue
        partial = resubstitute(w, mapping)
        known = sum(ch != WILDCARD for ch in partial)
        pairs = hamming_candidates(partial, wl)
        # a repair cannot pin anything down unless more letters are known than it may change
        if not pairs or known <= hamming_allowance(len(partial)):
            out.append(PositionResult(Status.NONE, (), {}, {}, partial))
            continue
        cands = tuple(p[0] for p in pairs)
        status = Status.FULL if len(cands) == 1 else Status.PARTIAL
        out.append(PositionResult(status, cands, {c: 1 for c in cands},
                                  {c: d for c, d in pairs}, partial))
    return tuple(out)


def plausible_delimiter(c: Clustering | list, delimiter_id: int, wl: Wordlist) -> bool:
    """A delimiter guess must sit strictly between words, never doubled, and
    leave only words whose lengths occur in the wordlist."""
    labels = list(c.labels if isinstance(c, Clustering) else c)
    if not labels or labels[0] == delimiter_id or labels[-1] == delimiter_id:
        return False
    if any(a == b == delimiter_id for a, b in zip(labels, labels[1:])):
        return False
    lengths = wl.index_by_length
    return all(len(w) in lengths for w in split_into_words(labels, delimiter_id))


def recover(c: Clustering, wl: Wordlist, expected_words: int | None = None,
            delimiter_tries: int = DELIMITER_TRIES, solution_cap: int = SOLUTION_CAP,
            cluster_set_id: int | None = None) -> RecoveryResult:
    """Try the top delimiter guesses and keep the best result: a complete
    recovery first, then most FULL words, then most PARTIAL words, then the
    earlier guess.

    Guesses that cannot split the labels into dictionary-length words are
    passed over without using up a try. When no guess is plausible the
    largest clusters are tried anyway.
    """
    if delimiter_tries < 1:
        raise ValueError("delimiter_tries must be at least 1")
    order = delimiter_candidates(c, expected_words)
    if all(lab == order[0] for lab in c.labels):
        raise NoWords(f"every label is the delimiter {order[0]}")
    guesses = [d for d in order if plausible_delimiter(c, d, wl)] or order
    best = None
    best_key = None
    for delim in guesses[:delimiter_tries]:
        try:
            words = split_into_words(c, delim)
        except NoWords:
            continue
        positions = _recover_with(words, wl, solution_cap)
        result = RecoveryResult(positions, delim, cluster_set_id)
        key = (result.is_full(), result.words_recovered, result.partial_count)
        if best is None or key > best_key:
            best, best_key = result, key
    if best is None:
        raise NoWords("no delimiter guess leaves any word")
    return best


def merge_recoveries(results: list[RecoveryResult]) -> RecoveryResult:
    """Combine recoveries from several cluster sets.

    Results are grouped by word count and each group is merged position by
    position: a position is FULL if any member recovered it fully (the word
    most members agreed on comes first), otherwise PARTIAL over the union of
    candidates. The group whose merge recovers the most words wins, ties going
    to the larger group, so adding a result never lowers the recovered count.
    """
    results = list(results)
    if not results:
        raise ValueError("nothing to merge")
    groups: dict[int, list[RecoveryResult]] = defaultdict(list)
    for r in results:
        groups[len(r.positions)].append(r)

    merged_groups = []
    for n_words, members in groups.items():
        positions = []
        for pos in range(n_words):
            items = [m.positions[pos] for m in members]
            support: Counter = Counter()
            distance: dict[str, int] = {}
            for it in items:
                for cand in it.candidates:
                    support[cand] += it.support.get(cand, 1)
                    d = it.distance.get(cand, 0)
                    distance[cand] = min(d, distance.get(cand, d))
            full_votes = Counter(it.word for it in items if it.status is Status.FULL)
            ranked = sorted(support, key=lambda w: (-support[w], distance[w], w))
            partials = [it.partial for it in items if it.partial is not None]
            partial = partials[0] if partials else None
            if full_votes:
                top = min(full_votes, key=lambda w: (-full_votes[w], w))
                ranked = [top] + [w for w in ranked if w != top]
                positions.append(PositionResult(Status.FULL, tuple(ranked), dict(support), distance, partial))
            elif ranked:
                positions.append(PositionResult(Status.PARTIAL, tuple(ranked), dict(support), distance, partial))
            else:
                positions.append(PositionResult(Status.NONE, (), {}, {}, partial))
        merged = RecoveryResult(tuple(positions), members[0].delimiter_id, None, len(members))
        merged_groups.append(merged)
    return max(merged_groups, key=lambda r: (r.words_recovered, r.members, r.partial_count, -len(r.positions)))


def save_recovery(path, result: RecoveryResult, extra: dict | None = None) -> None:
    doc = result.to_json()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1))


def load_recovery(path) -> RecoveryResult:
    return RecoveryResult.from_json(json.loads(Path(path).read_text()))
