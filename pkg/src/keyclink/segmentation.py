"""Keystroke onset detection and fixed-size press / press+release windows."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import maximum_filter1d

from .audio import AudioRecording
from .errors import BadFraming, TooFewKeystrokes

FRAME_MS = 5.0
HOP_MS = 1.0
THRESHOLD_FACTOR = 8.0
MIN_GAP_MS = 100.0
PRESS_WINDOW_MS = 30.0
RELEASE_WINDOW_MS = 90.0


class Span(str, enum.Enum):
    P = "P"
    PR = "PR"


@dataclass(frozen=True, eq=False)
class EnergySeries:
    values: np.ndarray
    frame_len: int
    hop: int
    sample_rate: int


@dataclass(frozen=True, eq=False)
class KeystrokeSegment:
    samples: np.ndarray
    onset_index: int
    span: Span
    press_window_ms: float
    release_window_ms: float


def short_time_energy(rec: AudioRecording, frame_len: int, hop: int) -> EnergySeries:
    n = rec.samples.size
    if not (0 < frame_len <= n) or not (0 < hop <= frame_len):
        raise BadFraming(f"frame_len={frame_len}, hop={hop} invalid for {n} samples")
    # direct per-frame sums; a running cumsum leaves round-off residue in silence
    frames = sliding_window_view(rec.samples ** 2, frame_len)[::hop]
    values = frames.sum(axis=1)
    return EnergySeries(values, frame_len, hop, rec.sample_rate)


def energy_for(rec: AudioRecording, frame_ms: float = FRAME_MS, hop_ms: float = HOP_MS) -> EnergySeries:
    frame_len = max(1, min(rec.ms_to_samples(frame_ms), len(rec)))
    hop = max(1, min(rec.ms_to_samples(hop_ms), frame_len))
    return short_time_energy(rec, frame_len, hop)


def detect_keystrokes(
    energy: EnergySeries,
    threshold_factor: float = THRESHOLD_FACTOR,
    min_gap_ms: float = MIN_GAP_MS,
    expected_count: int | None = None,
) -> list[int]:
    """Onset sample indices, ascending.

    A frame is an onset when its energy exceeds ``threshold_factor`` times the
    median frame energy and it is the largest frame within ``min_gap_ms`` on
    either side. Requiring the window maximum (rather than greedy suppression)
    keeps the decaying tail of a suppressed release click from surfacing as a
    keystroke of its own.
    """
    if threshold_factor <= 0 or min_gap_ms <= 0:
        raise ValueError("threshold_factor and min_gap_ms must be positive")
    v = energy.values
    if v.size == 0 or v.max() <= 0:
        if expected_count:
            raise TooFewKeystrokes(0, expected_count)
        return []

    threshold = threshold_factor * float(np.median(v))
    gap_frames = min_gap_ms * energy.sample_rate / 1000.0 / energy.hop
    reach = max(1, int(np.ceil(gap_frames)) - 1)
    window_max = maximum_filter1d(v, size=2 * reach + 1, mode="constant", cval=0.0)
    candidates = np.flatnonzero((v >= window_max) & (v > threshold))

    # plateaus and exact ties leave several candidates; keep the earliest
    order = candidates[np.lexsort((candidates, -v[candidates]))]
    kept: list[int] = []
    for idx in order:
        if all(abs(idx - k) >= gap_frames for k in kept):
            kept.append(int(idx))

    if expected_count is not None:
        if len(kept) < expected_count:
            raise TooFewKeystrokes(len(kept), expected_count)
        kept = kept[:expected_count]  # already ordered by height
    return sorted(k * energy.hop for k in kept)


def segment_length(sample_rate: int, span: Span | str, press_window_ms: float,
                   release_window_ms: float) -> int:
    ms = press_window_ms + (release_window_ms if Span(span) is Span.PR else 0.0)
    return int(round(ms * sample_rate / 1000.0))


def extract_spans(
    rec: AudioRecording,
    onsets,
    span: Span | str = Span.P,
    press_window_ms: float = PRESS_WINDOW_MS,
    release_window_ms: float = RELEASE_WINDOW_MS,
) -> list[KeystrokeSegment]:
    span = Span(span)
    if press_window_ms <= 0 or release_window_ms <= 0:
        raise ValueError("windows must be positive")
    length = segment_length(rec.sample_rate, span, press_window_ms, release_window_ms)
    n = len(rec)
    out = []
    for onset in onsets:
        onset = int(onset)
        if not 0 <= onset < n:
            raise ValueError(f"onset {onset} outside recording of {n} samples")
        chunk = np.zeros(length)
        piece = rec.samples[onset:onset + length]
        chunk[:piece.size] = piece
        chunk.flags.writeable = False
        out.append(KeystrokeSegment(chunk, onset, span, press_window_ms, release_window_ms))
    return out


def stack(segments: list[KeystrokeSegment]) -> np.ndarray:
    if not segments:
        return np.zeros((0, 0))
    return np.vstack([s.samples for s in segments])


def save_segments(path, rec: AudioRecording, onsets, span, press_window_ms, release_window_ms):
    span = Span(span)
    doc = {
        "source_id": rec.source_id,
        "sample_rate": rec.sample_rate,
        "span": span.value,
        "window_ms": {"press": press_window_ms, "release": release_window_ms},
        "onsets": [int(o) for o in onsets],
        "segment_len": segment_length(rec.sample_rate, span, press_window_ms, release_window_ms),
    }
    Path(path).write_text(json.dumps(doc, indent=2))
    return doc


def load_segments(path) -> dict:
    doc = json.loads(Path(path).read_text())
    for key in ("sample_rate", "span", "window_ms", "onsets", "segment_len"):
        if key not in doc:
            raise ValueError(f"{path}: missing {key!r}")
    return doc
