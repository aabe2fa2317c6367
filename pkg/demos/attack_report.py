"""End to end: synthesize a small corpus, attack it, draw the recovery matrix.

Run: python demos/attack_report.py [outdir]
"""
import sys
import tempfile
from pathlib import Path

from keyclink.demodulation import load_wordlist
from keyclink.hypersearch import PipelineConfig
from keyclink.report import AttackOptions, attack_sweep, curve_csv, matrix_text, recovery_curve, report_matrix
from keyclink.synthcorpus import appendix_passphrases, generate_corpus

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
corpus = out / "corpus"
generate_corpus(corpus, passphrases=appendix_passphrases()[:8], sample_ids=("s0", "s1"), snr_db=15)

reports = attack_sweep(corpus, PipelineConfig(), [1, 5], load_wordlist(), AttackOptions(seed=0))
print(matrix_text(reports[5]))
print(curve_csv(recovery_curve(reports)))
report_matrix(reports[5], "svg", out / "matrix.svg")
report_matrix(reports[5], "csv", out / "matrix.csv")
print("wrote", out / "matrix.svg", "and", out / "matrix.csv")
