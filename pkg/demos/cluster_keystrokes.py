"""Group keystrokes by sound: cross-correlation features and k-means.

Run: python demos/cluster_keystrokes.py
"""
from keyclink.clustering import cluster_sets, estimate_k, score_clustering
from keyclink.hypersearch import PipelineConfig, build_features
from keyclink.synthcorpus import synth_recording

sample = synth_recording("nugget iguana nylon", kit_seed=3, snr_db=20, rng=2)
cfg = PipelineConfig(model_type="XCORR", feature="RAW")
fm = build_features(sample.recording, sample.onsets, cfg)
print(f"feature matrix {fm.rows.shape}: each row is one keystroke's similarity to all others")

k = estimate_k(fm)
print(f"estimated {k} distinct keys (truth: {len(set(sample.labels))})")
for c in cluster_sets(fm, k, 3, base_seed=0):
    print(f"  seed {c.seed}: accuracy {score_clustering(c, sample.labels):.1f}  labels {c.labels}")
