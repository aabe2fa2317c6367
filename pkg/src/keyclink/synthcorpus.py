"""Synthetic ground truth: Diceware passphrases, keystroke audio with per-key
acoustic signatures, and a cluster-label error channel."""

from __future__ import annotations

import json
import math
import string
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .audio import AudioRecording, write_wav
from .clustering import Clustering
from .errors import RolloverRequested
from .features import xcorr_similarity

KEYS = " " + string.ascii_lowercase
SAMPLE_RATE = 44100
PRESS_MS = 30.0
RELEASE_DELAY_MS = 90.0
RELEASE_MS = 30.0
TEMPLATE_MS = RELEASE_DELAY_MS + RELEASE_MS
RELEASE_GAIN = 0.35
FREQ_LOW, FREQ_HIGH, FREQ_STEP = 400.0, 8000.0, 70.0
HEADROOM = 0.5
MAX_CROSS_KEY = 0.5
KIT_ATTEMPTS = 64


def _rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@lru_cache(maxsize=None)
def appendix_passphrases() -> tuple[tuple[str, ...], ...]:
    """The 30 reference passphrases (3 to 8 words, five of each length)."""
    text = resources.files("keyclink.data").joinpath("appendix_passphrases.txt").read_text()
    return tuple(tuple(line.split()) for line in text.splitlines() if line.strip())


def gen_passphrase(wl, n_words: int, rng=None, allow_any_length: bool = False) -> list[str]:
    """``n_words`` independent uniform draws from the wordlist (repeats allowed)."""
    if not allow_any_length and not 3 <= n_words <= 8:
        raise ValueError("n_words must be in [3, 8] unless allow_any_length is set")
    if n_words < 1:
        raise ValueError("n_words must be positive")
    words = wl.words if hasattr(wl, "words") else sorted(wl)
    picks = _rng(rng).integers(len(words), size=n_words)
    return [words[i] for i in picks]


@lru_cache(maxsize=8)
def _kit(kit_seed: int, sample_rate: int) -> dict[str, np.ndarray]:
    """Redraw until no two keys correlate at MAX_CROSS_KEY or more."""
    for attempt in range(KIT_ATTEMPTS):
        rng = np.random.default_rng(kit_seed if attempt == 0 else [kit_seed, attempt])
        kit = _draw_kit(rng, sample_rate)
        if max_cross_key_similarity(kit) < MAX_CROSS_KEY:
            return kit
    raise RuntimeError(f"kit {kit_seed}: no separable draw in {KIT_ATTEMPTS} attempts")


def max_cross_key_similarity(kit: dict[str, np.ndarray]) -> float:
    sim = xcorr_similarity(np.stack(list(kit.values()))).rows.copy()
    np.fill_diagonal(sim, -np.inf)
    return float(sim.max())


def _draw_kit(rng: np.random.Generator, sample_rate: int) -> dict[str, np.ndarray]:
    slots = rng.permutation(np.arange(FREQ_LOW, FREQ_HIGH, FREQ_STEP))
    counts = rng.integers(2, 5, size=len(KEYS))
    t_press = np.arange(int(round(PRESS_MS * sample_rate / 1000))) / sample_rate
    t_release = np.arange(int(round(RELEASE_MS * sample_rate / 1000))) / sample_rate
    length = int(round(TEMPLATE_MS * sample_rate / 1000))
    delay = int(round(RELEASE_DELAY_MS * sample_rate / 1000))
    kit = {}
    start = 0
    for key, count in zip(KEYS, counts):
        freqs = slots[start:start + count] + rng.uniform(-10.0, 10.0, size=count)
        start += count
        amps = rng.uniform(0.5, 1.0, size=count)
        taus = rng.uniform(3e-3, 8e-3, size=count)
        phases = rng.uniform(0.0, 2 * np.pi, size=count)
        release_phases = rng.uniform(0.0, 2 * np.pi, size=count)
        press = sum(a * np.exp(-t_press / tau) * np.sin(2 * np.pi * f * t_press + ph)
                    for a, f, tau, ph in zip(amps, freqs, taus, phases))
        release = sum(a * np.exp(-t_release / (0.6 * tau)) * np.sin(2 * np.pi * f * t_release + ph)
                      for a, f, tau, ph in zip(amps, freqs, taus, release_phases))
        wave = np.zeros(length)
        wave[:press.size] += press
        rel = release * RELEASE_GAIN * np.abs(press).max() / max(np.abs(release).max(), 1e-12)
        wave[delay:delay + rel.size] += rel[:length - delay]
        wave /= np.abs(wave).max()
        wave.flags.writeable = False
        kit[key] = wave
    return kit


def key_signature(key: str, kit_seed: int = 0, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Waveform template for ``key``: a damped-sinusoid press click plus a
    quieter release click 90 ms later, peak amplitude 1."""
    if key not in KEYS:
        raise ValueError(f"no signature for key {key!r}")
    return _kit(int(kit_seed), int(sample_rate))[key]


@dataclass(frozen=True, eq=False)
class SyntheticSample:
    recording: AudioRecording
    passphrase: tuple[str, ...]
    key_sequence: str
    onsets: tuple[int, ...]
    labels: tuple[str, ...]
    seed: int | None = None
    kit_seed: int = 0
    snr_db: float = math.inf
    sample_id: str = "s0"
    passphrase_index: int | None = None

    def __post_init__(self):
        if not (len(self.key_sequence) == len(self.onsets) == len(self.labels)):
            raise ValueError("key_sequence, onsets and labels must have equal length")
        if self.key_sequence != " ".join(self.passphrase):
            raise ValueError("key_sequence must be the passphrase joined by single spaces")

    def truth_json(self) -> dict:
        return {
            "source_id": self.recording.source_id,
            "sample_id": self.sample_id,
            "passphrase_index": self.passphrase_index,
            "passphrase": list(self.passphrase),
            "key_sequence": self.key_sequence,
            "onsets": list(self.onsets),
            "labels": list(self.labels),
            "sample_rate": self.recording.sample_rate,
            "seed": self.seed,
            "kit_seed": self.kit_seed,
            "snr_db": None if math.isinf(self.snr_db) else self.snr_db,
        }


def synth_recording(
    passphrase,
    kit_seed: int = 0,
    snr_db: float = 20.0,
    inter_key_ms: float = 250.0,
    jitter: tuple[float, float] = (30.0, 0.1),
    rng=None,
    sample_rate: int = SAMPLE_RATE,
    lead_ms: float = 200.0,
    tail_ms: float = 300.0,
    sample_id: str = "s0",
    passphrase_index: int | None = None,
) -> SyntheticSample:
    """Type ``passphrase`` with the kit's key signatures.

    Onsets sit ``inter_key_ms`` apart, each moved by up to ``jitter[0]`` ms;
    gains vary by up to ``jitter[1]`` (relative). White noise is scaled so that
    signal power over the keystroke windows is ``snr_db`` above noise power.
    """
    if isinstance(passphrase, str):
        passphrase = passphrase.split()
    passphrase = tuple(passphrase)
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = _rng(rng)
    timing_ms, amp_ratio = jitter
    if inter_key_ms - 2 * timing_ms <= TEMPLATE_MS:
        raise RolloverRequested(
            f"keystrokes {inter_key_ms} +- {timing_ms} ms apart would overlap "
            f"{TEMPLATE_MS} ms press+release templates")
    keys = " ".join(passphrase)
    ms = sample_rate / 1000.0
    base = lead_ms + inter_key_ms * np.arange(len(keys))
    onset_ms = base + rng.uniform(-timing_ms, timing_ms, size=len(keys))
    onsets = np.round(onset_ms * ms).astype(int)
    gains = HEADROOM * rng.uniform(1.0 - amp_ratio, 1.0 + amp_ratio, size=len(keys))

    length = int(round(TEMPLATE_MS * ms))
    total = int(onsets[-1] + length + tail_ms * ms) if len(keys) else int((lead_ms + tail_ms) * ms)
    clean = np.zeros(total)
    mask = np.zeros(total, dtype=bool)
    for key, onset, gain in zip(keys, onsets, gains):
        template = key_signature(key, kit_seed, sample_rate)
        clean[onset:onset + template.size] += gain * template
        mask[onset:onset + template.size] = True

    signal = clean
    if not math.isinf(snr_db):
        power = float(np.mean(clean[mask] ** 2)) if mask.any() else 0.0
        sigma = math.sqrt(power / 10.0 ** (snr_db / 10.0))
        signal = clean + rng.normal(0.0, sigma, size=total)
    signal = np.clip(signal, -1.0, 1.0)
    source = f"{sample_id}_{passphrase_index:02d}" if passphrase_index is not None else sample_id
    return SyntheticSample(
        recording=AudioRecording(signal, sample_rate, source),
        passphrase=passphrase,
        key_sequence=keys,
        onsets=tuple(int(o) for o in onsets),
        labels=tuple(keys),
        seed=None if seed is None else int(seed),
        kit_seed=kit_seed,
        snr_db=float(snr_db),
        sample_id=sample_id,
        passphrase_index=passphrase_index,
    )


def keystroke_mask(sample: SyntheticSample) -> np.ndarray:
    n = len(sample.recording)
    length = int(round(TEMPLATE_MS * sample.recording.sample_rate / 1000.0))
    mask = np.zeros(n, dtype=bool)
    for onset in sample.onsets:
        mask[onset:onset + length] = True
    return mask


def corrupt_clustering(c: Clustering, error_rate: float, rng=None) -> Clustering:
    """Replace each label, with probability ``error_rate``, by a uniformly
    chosen different cluster id."""
    if not 0.0 <= error_rate <= 1.0:
        raise ValueError("error_rate must be in [0, 1]")
    rng = _rng(rng)
    labels = np.asarray(c.labels, dtype=np.int64)
    flip = rng.random(labels.size) < error_rate
    if c.k > 1:
        shift = rng.integers(1, c.k, size=labels.size)
        labels = np.where(flip, (labels + shift) % c.k, labels)
    return Clustering(tuple(labels.tolist()), c.k, c.inertia, c.seed)


def truth_clustering(labels) -> Clustering:
    """Ground-truth keys as a clustering (ids by first appearance)."""
    return Clustering.from_sequence(labels)


def write_sample(sample: SyntheticSample, wav_path, truth_path=None) -> None:
    write_wav(sample.recording, wav_path)
    if truth_path is not None:
        Path(truth_path).write_text(json.dumps(sample.truth_json(), indent=1))


def load_truth(path) -> dict:
    return json.loads(Path(path).read_text())


def generate_corpus(
    out_dir,
    passphrases=None,
    sample_ids=("s0",),
    snr_db: float = 20.0,
    kit_seeds=None,
    seed: int = 0,
    **synth_kwargs,
) -> list[Path]:
    """Write ``<sample>_<index>.wav`` plus ``.json`` truth for every sample x passphrase.

    Each sample id gets its own kit (a different "keyboard"). Per-recording
    seeds derive from ``seed``, the sample position and the passphrase index.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    passphrases = appendix_passphrases() if passphrases is None else passphrases
    if kit_seeds is None:
        kit_seeds = list(range(len(sample_ids)))
    written = []
    for s_pos, (sid, kit_seed) in enumerate(zip(sample_ids, kit_seeds)):
        for idx, phrase in enumerate(passphrases):
            rec_seed = seed * 1_000_003 + s_pos * 1009 + idx
            sample = synth_recording(phrase, kit_seed=kit_seed, snr_db=snr_db, rng=rec_seed,
                                     sample_id=sid, passphrase_index=idx, **synth_kwargs)
            stem = out_dir / f"{sid}_{idx:02d}"
            write_sample(sample, stem.with_suffix(".wav"), stem.with_suffix(".json"))
            written.append(stem.with_suffix(".wav"))
    return written
