import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from keyclink.audio import AudioRecording
from keyclink.errors import BadFraming, TooFewKeystrokes
from keyclink.segmentation import (EnergySeries, Span, detect_keystrokes, energy_for,
                                   extract_spans, load_segments, save_segments,
                                   segment_length, short_time_energy)
from keyclink.synthcorpus import gen_passphrase, synth_recording

SR = 44100


def _rec(x, sr=SR):
    return AudioRecording(np.asarray(x, dtype=float), sr)


def test_energy_zero():
    e = short_time_energy(_rec(np.zeros(1000)), 64, 16)
    assert not e.values.any()


def test_energy_impulse():
    x = np.zeros(16)
    x[0] = 1.0
    assert short_time_energy(_rec(x), 4, 4).values.tolist() == [1, 0, 0, 0]


@settings(max_examples=50, deadline=None)
@given(st.integers(20, 300), st.integers(1, 20), st.integers(1, 20), st.integers(0, 2 ** 31))
def test_energy_matches_direct_sum(n, frame, hop, seed):
    hop = min(hop, frame)
    frame = min(frame, n)
    hop = min(hop, frame)
    x = np.random.default_rng(seed).normal(size=n)
    e = short_time_energy(_rec(x, 8000), frame, hop)
    assert len(e.values) == (n - frame) // hop + 1
    direct = [np.sum(x[i * hop:i * hop + frame] ** 2) for i in range(len(e.values))]
    np.testing.assert_allclose(e.values, direct, rtol=1e-12)
    assert (e.values >= 0).all()


@pytest.mark.parametrize("frame,hop", [(0, 1), (10, 0), (10, 11), (2000, 1)])
def test_bad_framing(frame, hop):
    with pytest.raises(BadFraming):
        short_time_energy(_rec(np.ones(1000)), frame, hop)


def test_zero_energy_no_onsets():
    assert detect_keystrokes(EnergySeries(np.zeros(500), 220, 44, SR)) == []


def test_close_impulses_keep_higher():
    x = np.zeros(SR)
    x[10000] = 0.5
    x[10000 + int(0.010 * SR)] = 1.0
    onsets = detect_keystrokes(energy_for(_rec(x)), min_gap_ms=50)
    assert len(onsets) == 1
    # the louder impulse lies inside the chosen 5 ms frame
    assert onsets[0] <= 10441 < onsets[0] + int(0.005 * SR)


def test_three_keystrokes_three_peaks():
    s = synth_recording("a b", snr_db=30, rng=3)
    assert len(detect_keystrokes(energy_for(s.recording))) == 3


def test_known_passphrase_onsets(clean_sample, noisy_sample):
    for s in (clean_sample, noisy_sample):
        onsets = detect_keystrokes(energy_for(s.recording))
        # 4 words, 25 letters and 3 spaces
        assert len(onsets) == len(s.onsets) == 28
        err_ms = np.abs(np.array(onsets) - np.array(s.onsets)) * 1000 / SR
        assert err_ms.max() <= 5.0


def test_expected_count():
    s = synth_recording("ab cd", snr_db=25, rng=5)
    e = energy_for(s.recording)
    assert len(detect_keystrokes(e, expected_count=3)) == 3
    with pytest.raises(TooFewKeystrokes) as info:
        detect_keystrokes(e, expected_count=9)
    assert (info.value.found, info.value.expected) == (5, 9)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 50.0))
def test_scale_invariance(gain):
    s = synth_recording("kiwi", snr_db=20, rng=11)
    base = detect_keystrokes(energy_for(s.recording))
    scaled = AudioRecording(s.recording.samples * gain, SR)
    assert detect_keystrokes(energy_for(scaled)) == base


def test_count_accuracy_over_random_samples(wl):
    rng = np.random.default_rng(2024)
    hits = 0
    for i in range(100):
        phrase = gen_passphrase(wl, int(rng.integers(3, 9)), rng)
        s = synth_recording(phrase, kit_seed=i % 7, snr_db=float(rng.uniform(20, 40)), rng=rng)
        hits += len(detect_keystrokes(energy_for(s.recording))) == len(s.onsets)
    assert hits >= 95


def test_single_onset_p_span():
    segs = extract_spans(_rec(np.ones(SR)), [0], Span.P, 30, 90)
    assert len(segs) == 1 and segs[0].samples.size == 1323


def test_padding_at_end():
    x = np.ones(2000)
    segs = extract_spans(_rec(x), [10, 1900], "PR", 30, 90)
    assert {s.samples.size for s in segs} == {segment_length(SR, "PR", 30, 90)}
    assert segs[1].samples[:100].sum() == 100 and not segs[1].samples[100:].any()


def test_pr_energy_dominates_p(noisy_sample):
    rec = noisy_sample.recording
    p = extract_spans(rec, noisy_sample.onsets, "P")
    pr = extract_spans(rec, noisy_sample.onsets, "PR")
    for a, b in zip(p, pr):
        assert np.sum(b.samples ** 2) >= np.sum(a.samples ** 2)
        assert np.array_equal(b.samples[:a.samples.size], a.samples)


def test_onsets_outside_rejected():
    with pytest.raises(ValueError):
        extract_spans(_rec(np.ones(100)), [100])


def test_segments_json(tmp_path, noisy_sample):
    rec = noisy_sample.recording
    onsets = detect_keystrokes(energy_for(rec))
    doc = save_segments(tmp_path / "seg.json", rec, onsets, "PR", 30, 90)
    back = load_segments(tmp_path / "seg.json")
    assert back == json.loads(json.dumps(doc))
    assert set(back) == {"source_id", "sample_rate", "span", "window_ms", "onsets", "segment_len"}
    assert back["segment_len"] == round(0.120 * SR)
