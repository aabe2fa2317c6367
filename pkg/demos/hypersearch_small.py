"""A short random search over feature and clustering settings.

Run: python demos/hypersearch_small.py
"""
from keyclink.hypersearch import SearchSpace, as_eval_sample, search
from keyclink.synthcorpus import appendix_passphrases, synth_recording

samples = [as_eval_sample(synth_recording(p, kit_seed=i, snr_db=20, rng=i, sample_id=f"h{i}"))
           for i, p in enumerate(appendix_passphrases()[:4])]
report = search(SearchSpace(), 16, samples, seed=0)
for e in report.entries[:5]:
    c = e.config
    print(f"{c.model_type.value:6} {c.feature.value:8} span={c.span.value:2} pca={c.pca!s:5} "
          f"median {e.summary.median:6.2f} mean {e.summary.mean:6.2f}")
for m in ("XCORR", "KMEANS"):
    best = report.best(m)
    print(f"best {m}: {best.summary.median:.2f}" if best else f"no {m} trial")
