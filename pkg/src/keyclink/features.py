"""Per-keystroke feature vectors: smoothing, FFT, MFCC, cross-correlation,
scaling and PCA."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .errors import RowMismatch, SegmentTooShort, TooManyComponents, WindowTooLarge
from .segmentation import KeystrokeSegment

MFCC_FRAME_MS = 10.0
MFCC_HOP_MS = 5.0
MFCC_N_MELS = 40
MFCC_N_COEFFS = 36
LOG_FLOOR = 1e-10
PRE_EMPHASIS = 0.97


class Feature(str, enum.Enum):
    RAW = "RAW"
    FFT = "FFT"
    MFCC = "MFCC"
    FFT_MFCC = "FFT_MFCC"
    XCORR = "XCORR"


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    rows: np.ndarray
    provenance: Feature
    transforms: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows.reshape(-1, 1) if rows.size else rows.reshape(0, 0)
        if rows.ndim != 2:
            raise ValueError("feature rows must form a 2-D array")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "provenance", Feature(self.provenance))

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self):
        return self.rows.shape[0]

    def to_json(self) -> dict:
        return {
            "provenance": self.provenance.value,
            "transforms": self.transforms,
            "dim": self.dim,
            "rows": self.rows.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureMatrix":
        rows = np.array(doc["rows"], dtype=np.float64).reshape(len(doc["rows"]), doc["dim"])
        return cls(rows, Feature(doc["provenance"]), dict(doc.get("transforms", {})))


def save_features(path, fm: FeatureMatrix) -> None:
    Path(path).write_text(json.dumps(fm.to_json()))


def load_features(path) -> FeatureMatrix:
    return FeatureMatrix.from_json(json.loads(Path(path).read_text()))


def _samples(segment) -> np.ndarray:
    if isinstance(segment, KeystrokeSegment):
        return segment.samples
    return np.asarray(segment, dtype=np.float64)


def _next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def smooth(segment, window: int):
    """Boxcar moving average, same length, zero-padded at the edges."""
    x = _samples(segment)
    window = int(window)
    if window < 1 or window > x.size:
        raise WindowTooLarge(f"window {window} not in [1, {x.size}]")
    if window == 1:
        out = x.copy()
    else:
        out = np.convolve(x, np.full(window, 1.0 / window), mode="same")
    if isinstance(segment, KeystrokeSegment):
        out.flags.writeable = False
        return replace(segment, samples=out)
    return out


def fft_feature(segment) -> np.ndarray:
    x = _samples(segment)
    n = _next_pow2(x.size)
    return np.abs(np.fft.rfft(x, n))[1:n // 2 + 1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters evenly spaced on the mel scale from 0 Hz to Nyquist,
    shape (n_mels, n_fft // 2 + 1)."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def mfcc_frames(segment, sample_rate: int, n_coeffs: int = MFCC_N_COEFFS,
                frame_ms: float = MFCC_FRAME_MS, hop_ms: float = MFCC_HOP_MS,
                n_mels: int = MFCC_N_MELS) -> np.ndarray:
    """MFCCs per frame, shape (frame_count, n_coeffs)."""
    x = _samples(segment)
    if n_coeffs < 1 or n_coeffs > n_mels:
        raise ValueError(f"n_coeffs must be in [1, n_mels={n_mels}], got {n_coeffs}")
    frame_len = int(round(frame_ms * sample_rate / 1000.0))
    hop = int(round(hop_ms * sample_rate / 1000.0))
    if frame_len < 2 or hop < 1 or frame_len > x.size:
        raise SegmentTooShort(
            f"segment of {x.size} samples cannot hold a {frame_len}-sample frame")
    count = (x.size - frame_len) // hop + 1
    idx = np.arange(frame_len)[None, :] + hop * np.arange(count)[:, None]
    frames = x[idx]
    frames = np.concatenate((frames[:, :1], frames[:, 1:] - PRE_EMPHASIS * frames[:, :-1]), axis=1)
    frames = frames * np.hanning(frame_len)
    n_fft = _next_pow2(frame_len)
    power = np.abs(np.fft.rfft(frames, n_fft, axis=1)) ** 2 / n_fft
    mel = power @ mel_filterbank(n_mels, n_fft, sample_rate).T
    logmel = np.log(np.maximum(mel, LOG_FLOOR))
    return dct(logmel, type=2, norm="ortho", axis=1)[:, :n_coeffs]


def mfcc_feature(segment, sample_rate: int, n_coeffs: int = MFCC_N_COEFFS,
                 frame_ms: float = MFCC_FRAME_MS, hop_ms: float = MFCC_HOP_MS,
                 n_mels: int = MFCC_N_MELS) -> np.ndarray:
    """Per-frame MFCCs flattened frame-major into one vector."""
    return mfcc_frames(segment, sample_rate, n_coeffs, frame_ms, hop_ms, n_mels).reshape(-1)


def concat_features(a: FeatureMatrix, b: FeatureMatrix) -> FeatureMatrix:
    if b.rows.size == 0 and len(b) == 0:
        return a
    if a.rows.size == 0 and len(a) == 0:
        return b
    if len(a) != len(b):
        raise RowMismatch(f"{len(a)} rows vs {len(b)} rows")
    transforms = {**a.transforms, **b.transforms, "parts": [a.provenance.value, b.provenance.value]}
    return FeatureMatrix(np.hstack([a.rows, b.rows]), Feature.FFT_MFCC, transforms)


def _as_rows(rows) -> tuple[np.ndarray, dict]:
    if isinstance(rows, FeatureMatrix):
        return rows.rows, dict(rows.transforms)
    if len(rows) and isinstance(rows[0], KeystrokeSegment):
        return np.vstack([s.samples for s in rows]), {}
    return np.asarray(rows, dtype=np.float64), {}


def xcorr_similarity(rows) -> FeatureMatrix:
    """Pairwise maximum-over-lags normalized cross-correlation.

    Each row is made zero-mean and unit-norm, then entry (i, j) is the largest
    value of the full cross-correlation of rows i and j. Rows of the result
    serve as per-keystroke feature vectors. Constant rows correlate 0 with
    everything else and are listed under ``transforms["degenerate_rows"]``.
    """
    x, transforms = _as_rows(rows)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("cross-correlation needs at least two rows of equal length")
    n, length = x.shape
    x = x - x.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(x, axis=1)
    degenerate = norms <= 1e-12 * max(1.0, float(np.abs(x).max(initial=0.0)))
    x[~degenerate] /= norms[~degenerate, None]
    x[degenerate] = 0.0

    n_fft = _next_pow2(2 * length - 1)
    spectra = np.fft.rfft(x, n_fft, axis=1)
    sim = np.eye(n)
    for i in range(n - 1):
        corr = np.fft.irfft(spectra[i + 1:] * np.conj(spectra[i]), n_fft, axis=1)
        # zero rows (degenerate) yield 0 here; lags beyond +-(length - 1) are padding
        peak = np.concatenate((corr[:, :length], corr[:, n_fft - length + 1:]), axis=1).max(axis=1)
        sim[i, i + 1:] = peak
        sim[i + 1:, i] = peak
    np.clip(sim, -1.0, 1.0, out=sim)
    transforms["xcorr_source"] = transforms.get("feature", "RAW")
    if degenerate.any():
        transforms["degenerate_rows"] = np.flatnonzero(degenerate).tolist()
    return FeatureMatrix(sim, Feature.XCORR, transforms)


def standardize(m: FeatureMatrix) -> FeatureMatrix:
    x = m.rows
    if x.shape[0] < 2:
        raise ValueError("standardize needs at least two rows")
    mean = x.mean(axis=0)
    centered = x - mean
    std = np.sqrt((centered ** 2).mean(axis=0))
    scale = np.maximum(1.0, np.abs(x).max(axis=0))
    flat = std <= 1e-12 * scale
    out = np.zeros_like(x)
    out[:, ~flat] = centered[:, ~flat] / std[~flat]
    return FeatureMatrix(out, m.provenance, {**m.transforms, "scaled": True})


def pca_reduce(m: FeatureMatrix, d: int) -> FeatureMatrix:
    """Project centred rows onto the top-``d`` principal directions.

    Each direction is signed so its largest-magnitude loading is positive.
    """
    x = m.rows
    n, dim = x.shape
    if not 1 <= d <= min(n - 1, dim):
        raise TooManyComponents(f"d={d} not in [1, min(rows-1={n - 1}, dim={dim})]")
    centered = x - x.mean(axis=0)
    if dim <= n:
        evals, evecs = np.linalg.eigh(centered.T @ centered / n)
        order = np.argsort(evals)[::-1][:d]
        evals, directions = evals[order], evecs[:, order]
    else:
        # same principal directions from the smaller n x n Gram matrix
        evals, evecs = np.linalg.eigh(centered @ centered.T / n)
        order = np.argsort(evals)[::-1][:d]
        evals, u = evals[order], evecs[:, order]
        directions = centered.T @ u
        directions /= np.maximum(np.linalg.norm(directions, axis=0), 1e-300)
    pick = np.argmax(np.abs(directions), axis=0)
    signs = np.sign(directions[pick, np.arange(d)])
    signs[signs == 0] = 1.0
    directions = directions * signs
    projected = centered @ directions
    transforms = {**m.transforms, "pca_components": d,
                  "explained_variance": np.maximum(evals, 0.0).tolist()}
    return FeatureMatrix(projected, m.provenance, transforms)


def feature_matrix(segments, sample_rate: int, feature: Feature | str, *,
                   smoothing_window: int | None = None, mfcc: dict | None = None) -> FeatureMatrix:
    """Stack one feature vector per segment; optionally smooth waveforms first."""
    feature = Feature(feature)
    waves = [_samples(s) for s in segments]
    transforms: dict = {"feature": feature.value}
    if smoothing_window:
        w = min(int(smoothing_window), min(len(w_) for w_ in waves))
        waves = [smooth(w_, w) for w_ in waves]
        transforms["smoothing_window"] = w
    mfcc = dict(mfcc or {})
    if feature is Feature.RAW:
        rows = np.vstack(waves)
    elif feature is Feature.FFT:
        rows = np.vstack([fft_feature(w_) for w_ in waves])
    elif feature is Feature.MFCC:
        rows = np.vstack([mfcc_feature(w_, sample_rate, **mfcc) for w_ in waves])
    elif feature is Feature.FFT_MFCC:
        a = FeatureMatrix(np.vstack([fft_feature(w_) for w_ in waves]), Feature.FFT)
        b = FeatureMatrix(np.vstack([mfcc_feature(w_, sample_rate, **mfcc) for w_ in waves]), Feature.MFCC)
        out = concat_features(a, b)
        return FeatureMatrix(out.rows, Feature.FFT_MFCC, {**transforms, **out.transforms})
    else:
        raise ValueError(f"{feature} is not a per-segment feature")
    return FeatureMatrix(rows, feature, transforms)
