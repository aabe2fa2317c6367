"""Recording type plus WAV loading, writing and peak normalisation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import EmptyAudio, NotWav, UnsupportedEncoding

MIN_SAMPLE_RATE = 8000


@dataclass(frozen=True, eq=False)
class AudioRecording:
    samples: np.ndarray
    sample_rate: int
    source_id: str = field(default="")

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if samples.size == 0:
            raise EmptyAudio(f"recording {self.source_id!r} has no samples")
        if int(self.sample_rate) < MIN_SAMPLE_RATE:
            raise UnsupportedEncoding(
                f"sample rate {self.sample_rate} Hz is below {MIN_SAMPLE_RATE} Hz")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def ms_to_samples(self, ms: float) -> int:
        return int(round(ms * self.sample_rate / 1000.0))


def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # scipy left-aligns 24-bit PCM into int32, so one scale fits both widths
        return data.astype(np.float64) / 2147483648.0
    if data.dtype == np.float32:
        return data.astype(np.float64)
    raise UnsupportedEncoding(f"unsupported sample type {data.dtype}")


def load_wav(path: str | Path) -> AudioRecording:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(12)
    if len(head) < 12 or head[:4] not in (b"RIFF", b"RIFX") or head[8:12] != b"WAVE":
        raise NotWav(f"{path} is not a RIFF/WAVE file")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except ValueError as exc:
        raise UnsupportedEncoding(f"{path}: {exc}") from exc
    if data.ndim == 2:
        if data.shape[1] > 2:
            raise UnsupportedEncoding(f"{path}: {data.shape[1]} channels, expected 1 or 2")
        samples = _to_float(data).mean(axis=1)
    else:
        samples = _to_float(data)
    if samples.size == 0:
        raise EmptyAudio(f"{path} contains no samples")
    return AudioRecording(samples, rate, source_id=path.stem)


def write_wav(rec: AudioRecording, path: str | Path, bit_depth: int = 16) -> Path:
    """Write a mono WAV. Samples are clipped to [-1, 1] first."""
    path = Path(path)
    x = np.clip(rec.samples, -1.0, 1.0)
    if bit_depth == 16:
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    elif bit_depth == 32:
        data = x.astype(np.float32)
    elif bit_depth == 8:
        data = np.clip(np.round(x * 128.0 + 128.0), 0, 255).astype(np.uint8)
    else:
        raise UnsupportedEncoding(f"cannot write bit depth {bit_depth}")
    wavfile.write(path, rec.sample_rate, data)
    return path


def peak_normalize(rec: AudioRecording) -> AudioRecording:
    peak = np.max(np.abs(rec.samples))
    if peak == 0:
        return rec
    return AudioRecording(rec.samples / peak, rec.sample_rate, rec.source_id)
