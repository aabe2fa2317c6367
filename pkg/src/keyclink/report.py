"""End-to-end attack over a set of recordings, and recovery-matrix reports."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

from .audio import AudioRecording, load_wav
from .clustering import cluster_sets
from .combiner import candidate_sets, naive_count, prioritized_enumerate, truth_oracle
from .demodulation import RecoveryResult, Status, Wordlist, merge_recoveries, recover
from .errors import KeyclinkError, UnsupportedFormat
from .hypersearch import PipelineConfig, build_features, resolve_k, validate
from .segmentation import detect_keystrokes, energy_for


class CellStatus(str, enum.Enum):
    FULL = "FULL"
    PARTIAL = "PARTIAL"
    NONE = "NONE"
    MISSING = "MISSING"


@dataclass(frozen=True)
class Cell:
    sample_id: str
    passphrase_index: int
    status: CellStatus
    words_recovered: int = 0
    n_words: int = 0
    guess: tuple[str | None, ...] = ()
    naive_exponent: float | None = None
    attempts_exponent: float | None = None
    error: str | None = None

    @property
    def key(self) -> tuple[str, int]:
        return self.sample_id, self.passphrase_index


@dataclass(frozen=True)
class AttackInput:
    recording: AudioRecording
    sample_id: str
    passphrase_index: int
    truth: tuple[str, ...] | None = None


@dataclass(frozen=True)
class AttackOptions:
    seed: int = 0
    workers: int = 1
    combine: bool = False
    combine_budget: int = 2 ** 20
    truth_counts: bool = False
    delimiter_tries: int = 3
    solution_cap: int = 50


@dataclass(frozen=True)
class AttackReport:
    cells: tuple[Cell, ...]
    sample_ids: tuple[str, ...]
    passphrase_indices: tuple[int, ...]
    config: dict = field(default_factory=dict)
    sets: int = 1
    seed: int = 0

    def grid(self) -> dict[tuple[str, int], Cell]:
        return {c.key: c for c in self.cells}

    def cell(self, sample_id: str, index: int) -> Cell:
        return self.grid()[(sample_id, index)]

    @property
    def full_count(self) -> int:
        return sum(c.status is CellStatus.FULL for c in self.cells)

    @property
    def mean_words_recovered(self) -> float:
        present = [c.words_recovered for c in self.cells if c.status is not CellStatus.MISSING]
        return sum(present) / len(present) if present else 0.0

    def to_json(self) -> dict:
        return {"sets": self.sets, "seed": self.seed, "config": self.config,
                "sample_ids": list(self.sample_ids),
                "passphrase_indices": list(self.passphrase_indices),
                "cells": [_cell_json(c) for c in self.cells]}


def _cell_json(c: Cell) -> dict:
    return {"sample_id": c.sample_id, "passphrase_index": c.passphrase_index,
            "status": c.status.value, "words_recovered": c.words_recovered, "n_words": c.n_words,
            "guess": list(c.guess), "naive_exponent": c.naive_exponent,
            "attempts_exponent": c.attempts_exponent, "error": c.error}


_STEM = re.compile(r"^(.*)_(\d+)$")


def collect_inputs(inputs) -> list[AttackInput]:
    """Recordings from a directory, a list of WAV paths or ready-made inputs.

    A ``X.json`` truth file next to ``X.wav`` supplies the sample id,
    passphrase index and passphrase; otherwise ``<sample>_<index>`` file
    stems are parsed, falling back to index 0.
    """
    if isinstance(inputs, (str, Path)):
        root = Path(inputs)
        if not root.exists():
            raise FileNotFoundError(root)
        paths = sorted(root.glob("*.wav")) if root.is_dir() else [root]
    else:
        paths = list(inputs)
    out = []
    for item in paths:
        if isinstance(item, AttackInput):
            out.append(item)
            continue
        if hasattr(item, "recording") and hasattr(item, "passphrase"):
            out.append(AttackInput(item.recording, item.sample_id, item.passphrase_index or 0,
                                   tuple(item.passphrase)))
            continue
        path = Path(item)
        truth_path = path.with_suffix(".json")
        truth = json.loads(truth_path.read_text()) if truth_path.exists() else {}
        m = _STEM.match(path.stem)
        sid = truth.get("sample_id") or (m.group(1) if m else path.stem)
        idx = truth.get("passphrase_index")
        if idx is None:
            idx = int(m.group(2)) if m else 0
        phrase = tuple(truth["passphrase"]) if truth.get("passphrase") else None
        out.append(AttackInput(load_wav(path), sid, int(idx), phrase))
    if not out:
        raise ValueError("no recordings to attack")
    return out


def _recoveries(item: AttackInput, cfg: PipelineConfig, sets: int, wl: Wordlist,
                opts: AttackOptions) -> list[RecoveryResult | None]:
    rec = item.recording
    expected = None
    if opts.truth_counts and item.truth:
        expected = len(" ".join(item.truth))
    onsets = detect_keystrokes(energy_for(rec), expected_count=expected)
    fm = build_features(rec, onsets, cfg)
    truth_keys = " ".join(item.truth) if item.truth else None
    k = resolve_k(cfg, fm, truth_keys, opts.seed)
    out = []
    n_words = len(item.truth) if (opts.truth_counts and item.truth) else None
    for set_id, c in enumerate(cluster_sets(fm, k, sets, opts.seed)):
        try:
            out.append(recover(c, wl, n_words, opts.delimiter_tries, opts.solution_cap, set_id))
        except KeyclinkError:
            out.append(None)
    return out


def _cell_from(item: AttackInput, recoveries: list[RecoveryResult | None], wl: Wordlist,
               opts: AttackOptions) -> Cell:
    usable = [r for r in recoveries if r is not None]
    n_truth = len(item.truth) if item.truth else 0
    if not usable:
        return Cell(item.sample_id, item.passphrase_index, CellStatus.NONE, 0, n_truth)
    merged = merge_recoveries(usable)
    guess = tuple(merged.full_words)
    if item.truth:
        if len(merged.positions) == n_truth:
            correct = sum(g == t for g, t in zip(guess, item.truth))
        else:
            correct = 0
        n_words = n_truth
    else:
        correct = merged.words_recovered
        n_words = len(merged.positions)
    if n_words and correct == n_words:
        status = CellStatus.FULL
    elif correct > 0:
        status = CellStatus.PARTIAL
    else:
        status = CellStatus.NONE
    naive_exp = attempts_exp = None
    has_candidates = any(p.candidates for p in merged.positions)
    if opts.combine and status is not CellStatus.FULL and has_candidates:
        cs = candidate_sets(merged, wl)
        naive_exp = naive_count(cs).log2_exponent
        if item.truth and len(merged.positions) == n_truth:
            outcome = prioritized_enumerate(cs, opts.combine_budget, truth_oracle(item.truth))
            attempts_exp = math.log2(outcome.attempts) if outcome.found else None
    return Cell(item.sample_id, item.passphrase_index, status, correct, n_words, guess,
                naive_exp, attempts_exp)


def _attack_one(args):
    item, cfg, set_counts, wl, opts = args
    try:
        recoveries = _recoveries(item, cfg, max(set_counts), wl, opts)
    except (KeyclinkError, ValueError) as exc:
        cell = Cell(item.sample_id, item.passphrase_index, CellStatus.MISSING,
                    n_words=len(item.truth) if item.truth else 0,
                    error=f"{type(exc).__name__}: {exc}")
        return [cell] * len(set_counts)
    return [_cell_from(item, recoveries[:n], wl, opts) for n in set_counts]


def attack_sweep(inputs, cfg: PipelineConfig, set_counts, wl: Wordlist,
                 options: AttackOptions | None = None) -> dict[int, AttackReport]:
    """One report per cluster-set count.

    Cluster set ``i`` always uses seed ``seed + i``, so the smaller counts are
    prefixes of the largest and every report comes from the same clusterings.
    """
    opts = options or AttackOptions()
    set_counts = sorted(set(int(n) for n in set_counts))
    if not set_counts or set_counts[0] < 1:
        raise ValueError("set counts must be positive")
    validate(cfg)
    items = collect_inputs(inputs)
    jobs = [(item, cfg, set_counts, wl, opts) for item in items]
    if opts.workers > 1:
        with ProcessPoolExecutor(opts.workers) as pool:
            per_item = list(pool.map(_attack_one, jobs))
    else:
        per_item = [_attack_one(j) for j in jobs]

    sample_ids = tuple(dict.fromkeys(i.sample_id for i in items))
    indices = tuple(sorted({i.passphrase_index for i in items}))
    reports = {}
    for pos, n in enumerate(set_counts):
        cells = {c.key: c for c in (cells_[pos] for cells_ in per_item)}
        grid = []
        for sid in sample_ids:
            for idx in indices:
                grid.append(cells.get((sid, idx), Cell(sid, idx, CellStatus.MISSING)))
        reports[n] = AttackReport(tuple(grid), sample_ids, indices, cfg.to_json(), n, opts.seed)
    return reports


def attack(inputs, cfg: PipelineConfig, sets: int, wl: Wordlist,
           options: AttackOptions | None = None) -> AttackReport:
    """Detect, cluster, demodulate and merge every recording.

    Samples that fail before demodulation become MISSING cells and the run
    carries on.
    """
    return attack_sweep(inputs, cfg, [sets], wl, options)[sets]


# ----------------------------------------------------------------- reports

CSV_FIELDS = ("sample_id", "passphrase_index", "status", "words_recovered", "n_words",
              "naive_exponent", "attempts_exponent", "guess")


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6f}"


def matrix_csv(r: AttackReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for c in r.cells:
        w.writerow([c.sample_id, c.passphrase_index, c.status.value, c.words_recovered, c.n_words,
                    _fmt(c.naive_exponent), _fmt(c.attempts_exponent),
                    " ".join(g or "_" for g in c.guess)])
    return buf.getvalue()


def read_matrix_csv(text: str) -> AttackReport:
    cells = []
    for row in csv.DictReader(io.StringIO(text)):
        guess = tuple(None if g == "_" else g for g in row["guess"].split())
        cells.append(Cell(row["sample_id"], int(row["passphrase_index"]), CellStatus(row["status"]),
                          int(row["words_recovered"]), int(row["n_words"]), guess,
                          float(row["naive_exponent"]) if row["naive_exponent"] else None,
                          float(row["attempts_exponent"]) if row["attempts_exponent"] else None))
    sample_ids = tuple(dict.fromkeys(c.sample_id for c in cells))
    indices = tuple(sorted({c.passphrase_index for c in cells}))
    return AttackReport(tuple(cells), sample_ids, indices)


def _row_order(r: AttackReport, order: str) -> list[int]:
    """Passphrase indices from top row to bottom row."""
    if order == "index":
        return list(r.passphrase_indices)
    if order == "length":
        # longest on top so lengths grow from the bottom of the figure upward
        lengths = {}
        for c in r.cells:
            lengths[c.passphrase_index] = max(lengths.get(c.passphrase_index, 0), c.n_words)
        return sorted(r.passphrase_indices, key=lambda i: (-lengths.get(i, 0), -i))
    raise ValueError(f"unknown row order {order!r}")


def matrix_text(r: AttackReport, order: str = "index") -> str:
    """FULL '#', PARTIAL its word count, NONE '.', MISSING 'X'."""
    grid = r.grid()
    width = max([len(s) for s in r.sample_ids] + [3])
    lines = ["idx " + " ".join(s.rjust(width) for s in r.sample_ids)]
    for idx in _row_order(r, order):
        marks = []
        for sid in r.sample_ids:
            c = grid.get((sid, idx))
            if c is None or c.status is CellStatus.MISSING:
                m = "X"
            elif c.status is CellStatus.FULL:
                m = "#"
            elif c.status is CellStatus.PARTIAL:
                m = str(c.words_recovered)
            else:
                m = "."
            marks.append(m.rjust(width))
        lines.append(f"{idx:>3} " + " ".join(marks))
    return "\n".join(lines) + "\n"


CELL, PAD, LABEL_W = 24, 2, 40
FILL = "#3465a4"


def matrix_svg(r: AttackReport, order: str = "index") -> str:
    """Filled cell = FULL, cell filled by the recovered fraction with the count
    written on it = PARTIAL, empty = NONE, black = MISSING."""
    grid = r.grid()
    rows = _row_order(r, order)
    width = LABEL_W + len(r.sample_ids) * CELL + PAD
    height = len(rows) * CELL + LABEL_W + PAD
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="10">']
    inner = CELL - 2 * PAD
    for ri, idx in enumerate(rows):
        y = ri * CELL + PAD
        out.append(f'<text x="{LABEL_W - 4}" y="{y + CELL / 2 + 3:.1f}" text-anchor="end">{idx}</text>')
        for ci, sid in enumerate(r.sample_ids):
            x = LABEL_W + ci * CELL + PAD
            c = grid.get((sid, idx))
            status = CellStatus.MISSING if c is None else c.status
            tag = f'class="{status.value}" data-sample="{escape(sid)}" data-index="{idx}"'
            if status is CellStatus.MISSING:
                out.append(f'<rect {tag} x="{x}" y="{y}" width="{inner}" height="{inner}" fill="black"/>')
                continue
            out.append(f'<rect {tag} x="{x}" y="{y}" width="{inner}" height="{inner}" '
                       f'fill="none" stroke="{FILL}"/>')
            if status is CellStatus.FULL:
                out.append(f'<rect class="fill" x="{x}" y="{y}" width="{inner}" height="{inner}" fill="{FILL}"/>')
            elif status is CellStatus.PARTIAL:
                frac = c.words_recovered / c.n_words if c.n_words else 0.0
                out.append(f'<rect class="fill" x="{x}" y="{y}" width="{inner * frac:.2f}" '
                           f'height="{inner}" fill="{FILL}" fill-opacity="0.6" data-fraction="{frac:.4f}"/>')
                out.append(f'<text class="count" x="{x + inner / 2:.1f}" y="{y + inner / 2 + 3:.1f}" '
                           f'text-anchor="middle">{c.words_recovered}</text>')
    base = len(rows) * CELL + PAD
    for ci, sid in enumerate(r.sample_ids):
        x = LABEL_W + ci * CELL + CELL / 2
        out.append(f'<text x="{x:.1f}" y="{base + 12}" text-anchor="end" '
                   f'transform="rotate(-60 {x:.1f} {base + 12})">{escape(sid)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def report_matrix(r: AttackReport, fmt: str, path=None, order: str = "index") -> str:
    if not r.cells:
        raise ValueError("empty report")
    fmt = fmt.lower()
    if fmt == "csv":
        text = matrix_csv(r)
    elif fmt == "svg":
        text = matrix_svg(r, order)
    elif fmt in ("text", "txt"):
        text = matrix_text(r, order)
    else:
        raise UnsupportedFormat(f"unsupported report format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


@dataclass(frozen=True)
class CurveRow:
    sets: int
    full_count: int
    mean_words_recovered: float


def recovery_curve(reports) -> list[CurveRow]:
    """FULL count and mean recovered words per cluster-set count."""
    if isinstance(reports, dict):
        items = list(reports.items())
    else:
        items = [(r.sets, r) for r in reports]
    if len({n for n, _ in items}) < 2:
        raise ValueError("need reports for at least two set counts")
    return [CurveRow(n, r.full_count, round(r.mean_words_recovered, 6))
            for n, r in sorted(items, key=lambda t: t[0])]


def curve_csv(rows: list[CurveRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("sets", "full_count", "mean_words_recovered"))
    for row in rows:
        w.writerow((row.sets, row.full_count, f"{row.mean_words_recovered:.6f}"))
    return buf.getvalue()


def save_report_json(path, r: AttackReport) -> None:
    Path(path).write_text(json.dumps(r.to_json(), indent=1))


def load_report_json(path) -> AttackReport:
    doc = json.loads(Path(path).read_text())
    cells = tuple(Cell(c["sample_id"], c["passphrase_index"], CellStatus(c["status"]),
                       c["words_recovered"], c["n_words"],
                       tuple(c.get("guess", ())), c.get("naive_exponent"),
                       c.get("attempts_exponent"), c.get("error")) for c in doc["cells"])
    return AttackReport(cells, tuple(doc["sample_ids"]), tuple(doc["passphrase_indices"]),
                        doc.get("config", {}), doc.get("sets", 1), doc.get("seed", 0))
