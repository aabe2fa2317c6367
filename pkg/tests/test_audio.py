import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.io import wavfile

from keyclink.audio import AudioRecording, load_wav, peak_normalize, write_wav
from keyclink.errors import EmptyAudio, NotWav, UnsupportedEncoding


def _pcm24(path, frames: np.ndarray, rate=44100):
    """Hand-rolled 24-bit PCM writer (scipy cannot write this width)."""
    frames = np.atleast_2d(frames.T).T
    channels = frames.shape[1]
    payload = b"".join(int(v).to_bytes(3, "little", signed=True) for v in frames.reshape(-1))
    fmt = struct.pack("<HHIIHH", 1, channels, rate, rate * channels * 3, channels * 3, 24)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(payload)) + payload
    path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


def test_silence_16bit(tmp_path):
    p = tmp_path / "z.wav"
    wavfile.write(p, 44100, np.zeros(44100, dtype=np.int16))
    rec = load_wav(p)
    assert len(rec) == 44100 and rec.sample_rate == 44100
    assert not rec.samples.any()


def test_stereo_average_cancels(tmp_path):
    p = tmp_path / "s.wav"
    wavfile.write(p, 8000, np.tile(np.array([[0.5, -0.5]], dtype=np.float32), (800, 1)))
    assert np.all(load_wav(p).samples == 0.0)


def test_downmix_is_linear(tmp_path):
    rng = np.random.default_rng(0)
    left = rng.integers(-20000, 20000, 500).astype(np.int16)
    right = rng.integers(-20000, 20000, 500).astype(np.int16)
    zeros = np.zeros_like(left)
    paths = {}
    for name, data in {"lr": np.c_[left, right], "l": np.c_[left, zeros], "r": np.c_[zeros, right]}.items():
        paths[name] = tmp_path / f"{name}.wav"
        wavfile.write(paths[name], 16000, data)
    lr = load_wav(paths["lr"]).samples
    np.testing.assert_allclose(lr, load_wav(paths["l"]).samples + load_wav(paths["r"]).samples, atol=1e-15)


def test_synth_round_trip(tmp_path, noisy_sample):
    p = write_wav(noisy_sample.recording, tmp_path / "x.wav")
    back = load_wav(p)
    assert back.sample_rate == noisy_sample.recording.sample_rate
    assert np.max(np.abs(back.samples - noisy_sample.recording.samples)) <= 1 / 32768


@pytest.mark.parametrize("depth,tol", [(8, 1 / 128), (32, 1e-7)])
def test_other_depth_round_trip(tmp_path, depth, tol):
    x = np.linspace(-0.99, 0.99, 1001)
    p = write_wav(AudioRecording(x, 8000), tmp_path / "d.wav", bit_depth=depth)
    assert np.max(np.abs(load_wav(p).samples - x)) <= tol


def test_24bit_scaling(tmp_path):
    p = tmp_path / "t.wav"
    _pcm24(p, np.array([0, 2 ** 22, -(2 ** 23), 2 ** 23 - 1]))
    np.testing.assert_allclose(load_wav(p).samples, [0.0, 0.5, -1.0, 1 - 2 ** -23])


def test_24bit_stereo(tmp_path):
    p = tmp_path / "t2.wav"
    _pcm24(p, np.array([[2 ** 22, 0], [2 ** 21, 2 ** 21]]))
    np.testing.assert_allclose(load_wav(p).samples, [0.25, 0.25])


def test_not_wav(tmp_path):
    p = tmp_path / "n.wav"
    p.write_bytes(b"ID3 this is an mp3, honest")
    with pytest.raises(NotWav):
        load_wav(p)


def test_empty_wav(tmp_path):
    p = tmp_path / "e.wav"
    wavfile.write(p, 44100, np.zeros(0, dtype=np.int16))
    with pytest.raises(EmptyAudio):
        load_wav(p)


def test_low_rate_rejected(tmp_path):
    p = tmp_path / "lo.wav"
    wavfile.write(p, 4000, np.zeros(100, dtype=np.int16))
    with pytest.raises(UnsupportedEncoding):
        load_wav(p)


def test_many_channels_rejected(tmp_path):
    p = tmp_path / "c3.wav"
    wavfile.write(p, 8000, np.zeros((10, 3), dtype=np.int16))
    with pytest.raises(UnsupportedEncoding):
        load_wav(p)


def test_recording_is_immutable():
    rec = AudioRecording(np.ones(10), 8000)
    with pytest.raises(ValueError):
        rec.samples[0] = 2.0


def test_normalize_examples():
    rec = peak_normalize(AudioRecording(np.full(100, 0.25), 8000))
    assert np.all(rec.samples == 1.0)
    z = AudioRecording(np.zeros(50), 8000)
    assert peak_normalize(z) is z


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=200))
def test_normalize_properties(values):
    rec = AudioRecording(np.array(values), 8000)
    once = peak_normalize(rec)
    twice = peak_normalize(once)
    assert np.array_equal(once.samples, twice.samples)
    assert len(once) == len(rec)
    if np.any(rec.samples):
        assert np.max(np.abs(once.samples)) == pytest.approx(1.0)
        assert np.argmax(np.abs(once.samples)) == np.argmax(np.abs(rec.samples))
