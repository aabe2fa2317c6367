"""Type a passphrase on a synthetic keyboard, then find the keystrokes again.

Run: python demos/synth_and_segment.py
"""
import numpy as np

from keyclink.segmentation import detect_keystrokes, energy_for, extract_spans
from keyclink.synthcorpus import synth_recording

sample = synth_recording("taco ferret circle deliverer", kit_seed=0, snr_db=20, rng=1)
rec = sample.recording
print(f"{len(rec) / rec.sample_rate:.2f} s of audio, {len(sample.onsets)} keystrokes typed")

# short-time energy, 5 ms frames every 1 ms; peaks well above the median are keystrokes
onsets = detect_keystrokes(energy_for(rec))
err_ms = 1000 * np.abs(np.array(onsets) - np.array(sample.onsets)) / rec.sample_rate
print(f"detected {len(onsets)} onsets, worst timing error {err_ms.max():.1f} ms")

press = extract_spans(rec, onsets, "P")
both = extract_spans(rec, onsets, "PR")
print(f"press windows hold {press[0].samples.size} samples, press+release {both[0].samples.size}")
