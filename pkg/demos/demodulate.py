"""Read words out of cluster labels with a Diceware dictionary.

Cluster ids carry no letters, only the pattern of repeats. The pattern of
"nugget iguana nylon" admits exactly one reading from the EFF list.

Run: python demos/demodulate.py
"""
import numpy as np

from keyclink.demodulation import load_wordlist, merge_recoveries, recover
from keyclink.synthcorpus import corrupt_clustering, truth_clustering

wl = load_wordlist()
clean = truth_clustering("nugget iguana nylon")
print("labels:", clean.labels)
print("clean:", recover(clean, wl).full_words)

# clustering mistakes: each run flips about 5 % of the labels
rng = np.random.default_rng(4)
phrase = "sterile bulldozer scouting shrill"
results = []
for i in range(10):
    noisy = corrupt_clustering(truth_clustering(phrase), 0.05, rng)
    try:
        results.append(recover(noisy, wl, cluster_set_id=i))
    except Exception as exc:
        print(f"  set {i}: {exc}")
        continue
    print(f"  set {i}: {[p.status.value for p in results[-1].positions]}")
merged = merge_recoveries(results)
print("merged over", len(results), "sets:", [p.word or p.candidates[:3] for p in merged.positions])
