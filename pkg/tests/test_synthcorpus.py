import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from keyclink.audio import load_wav
from keyclink.clustering import Clustering, cluster_sets, score_clustering
from keyclink.demodulation import Wordlist
from keyclink.errors import RolloverRequested
from keyclink.hypersearch import PipelineConfig, as_eval_sample, build_features
from keyclink.synthcorpus import (KEYS, TEMPLATE_MS, appendix_passphrases, corrupt_clustering,
                                  gen_passphrase, generate_corpus, key_signature,
                                  keystroke_mask, max_cross_key_similarity, synth_recording,
                                  _kit)


def test_appendix_fixture(phrases):
    assert len(phrases) == 30
    assert sorted(len(p) for p in phrases) == [n for n in range(3, 9) for _ in range(5)]
    assert phrases[9] == ("taco", "ferret", "circle", "deliverer")


def test_gen_passphrase_deterministic(wl):
    a = gen_passphrase(wl, 3, np.random.default_rng(5))
    assert a == gen_passphrase(wl, 3, np.random.default_rng(5))
    assert len(a) == 3 and all(w in wl for w in a)
    assert gen_passphrase(wl, 1, 0, allow_any_length=True)[0] in wl
    with pytest.raises(ValueError):
        gen_passphrase(wl, 1, 0)


def test_gen_passphrase_uniform():
    rng = np.random.default_rng(0)
    words = [w for _ in range(10_000) for w in gen_passphrase(Wordlist(("ab", "cd")), 1, rng,
                                                               allow_any_length=True)]
    p = words.count("ab") / len(words)
    assert abs(p - 0.5) <= 3 * math.sqrt(0.25 / len(words))


def test_signature_properties():
    for key in KEYS:
        w = key_signature(key, 3)
        assert np.abs(w).max() == pytest.approx(1.0)
        assert w.size == round(TEMPLATE_MS * 44.1)
    assert np.array_equal(key_signature("q", 3), key_signature("q", 3))
    assert not np.allclose(key_signature("q", 3), key_signature("q", 4))
    with pytest.raises(ValueError):
        key_signature("!", 0)


@pytest.mark.parametrize("kit_seed", range(12))
def test_keys_are_separable(kit_seed):
    assert max_cross_key_similarity(_kit(kit_seed, 44100)) < 0.5


def test_noiseless_single_key():
    s = synth_recording(["a"], snr_db=math.inf, jitter=(0.0, 0.0), rng=0)
    template = 0.5 * key_signature("a", 0)
    placed = np.zeros(len(s.recording))
    placed[s.onsets[0]:s.onsets[0] + template.size] = template
    assert np.allclose(s.recording.samples, placed, atol=1e-12)


def test_taco_sample(clean_sample):
    s = clean_sample
    assert len(s.key_sequence) == len(s.onsets) == len(s.labels) == 28
    assert s.labels.count(" ") == 3
    assert s.key_sequence == "taco ferret circle deliverer"
    assert list(s.onsets) == sorted(s.onsets)


@pytest.mark.parametrize("snr", [10, 20, 30])
def test_measured_snr(snr):
    clean = synth_recording("taco ferret circle deliverer", snr_db=math.inf, rng=3)
    noisy = synth_recording("taco ferret circle deliverer", snr_db=snr, rng=3)
    mask = keystroke_mask(clean)
    signal = np.mean(clean.recording.samples[mask] ** 2)
    noise = np.mean((noisy.recording.samples - clean.recording.samples) ** 2)
    assert abs(10 * math.log10(signal / noise) - snr) <= 1.0


def test_rollover():
    with pytest.raises(RolloverRequested):
        synth_recording("taco", inter_key_ms=150)


@settings(max_examples=1000, deadline=None)
@given(words=st.lists(st.sampled_from(["taco", "ferret", "a", "circle", "zoo"]), min_size=1, max_size=4),
       seed=st.integers(0, 2 ** 32 - 1))
def test_sample_invariants(words, seed):
    s = synth_recording(words, snr_db=30, rng=seed)
    assert len(s.key_sequence) == len(s.onsets) == len(s.labels)
    assert s.key_sequence == " ".join(words)
    gaps = np.diff(s.onsets)
    assert np.all(gaps > TEMPLATE_MS * 44.1)


def test_corrupt_rate_zero_and_one():
    c = Clustering((0, 1, 1, 0, 2, 2), 3)
    assert corrupt_clustering(c, 0.0, 1).labels == c.labels
    two = Clustering((0, 1, 1, 0), 2)
    assert corrupt_clustering(two, 1.0, 1).labels == (1, 0, 0, 1)
    assert corrupt_clustering(c, 0.3, 9).labels == corrupt_clustering(c, 0.3, 9).labels
    with pytest.raises(ValueError):
        corrupt_clustering(c, 1.5)


def test_corrupt_rate_binomial():
    n = 100_000
    c = Clustering(tuple(np.arange(n) % 27), 27)
    out = corrupt_clustering(c, 0.05, 4)
    flips = np.mean(np.array(out.labels) != np.array(c.labels))
    assert abs(flips - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / n)
    assert out.k == 27


def test_noiseless_calibration(wl):
    """Perfect clustering is reachable from cross-correlation features on clean audio."""
    rng = np.random.default_rng(11)
    cfg = PipelineConfig()
    for i in range(100):
        words = gen_passphrase(wl, int(rng.integers(3, 9)), rng)
        s = as_eval_sample(synth_recording(words, kit_seed=int(rng.integers(1000)),
                                           snr_db=math.inf, rng=int(rng.integers(2 ** 31))))
        fm = build_features(s.recording, s.onsets, cfg)
        sets = cluster_sets(fm, len(set(s.labels)), 5, base_seed=i)
        assert max(score_clustering(c, s.labels) for c in sets) == 100.0


def test_generate_corpus(tmp_path):
    paths = generate_corpus(tmp_path, passphrases=[("taco", "zoo"), ("ferret",)],
                            sample_ids=("a", "b"), snr_db=20)
    assert [p.name for p in paths] == ["a_00.wav", "a_01.wav", "b_00.wav", "b_01.wav"]
    truth = json.loads((tmp_path / "b_00.json").read_text())
    assert truth["key_sequence"] == "taco zoo" and len(truth["onsets"]) == 8
    assert truth["kit_seed"] == 1
    rec = load_wav(paths[0])
    assert rec.sample_rate == 44100
    again = generate_corpus(tmp_path / "x", passphrases=[("taco", "zoo"), ("ferret",)],
                            sample_ids=("a", "b"), snr_db=20)
    assert again[3].read_bytes() == paths[3].read_bytes()
