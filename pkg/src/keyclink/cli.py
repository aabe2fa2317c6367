"""``keyclink`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 attack finished without
recovering a single word.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import combiner, hypersearch, report
from .audio import load_wav
from .clustering import cluster_sets, load_clusterings, save_clusterings
from .demodulation import (DELIMITER_TRIES, SOLUTION_CAP, load_recovery, load_wordlist,
                           merge_recoveries, recover, save_recovery)
from .errors import DataError, InvalidConfig, KeyclinkError
from .features import FeatureMatrix, save_features
from .hypersearch import ModelType, PipelineConfig, SearchSpace
from .segmentation import (MIN_GAP_MS, PRESS_WINDOW_MS, RELEASE_WINDOW_MS, THRESHOLD_FACTOR,
                           detect_keystrokes, energy_for, load_segments, save_segments)
from .synthcorpus import generate_corpus, synth_recording, write_sample

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NO_RECOVERY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_seed() -> int:
    raw = os.environ.get("KEYCLINK_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"KEYCLINK_SEED must be an integer, got {raw!r}") from None


def _float(text: str) -> float:
    return math.inf if text.lower() in ("inf", "none", "clean") else float(text)


def _k(text: str):
    return text if text in ("auto", "truth") else int(text)


# ---------------------------------------------------------------- config

CONFIG_FLAGS = ("model_type", "feature", "smoothing", "smoothing_window", "scaling", "pca",
                "pca_components", "span", "mfcc_coeffs", "press_window_ms", "release_window_ms", "k")


def _add_config_flags(p):
    g = p.add_argument_group("pipeline (overrides --config)")
    g.add_argument("--config", type=Path, help="TOML file with pipeline fields")
    g.add_argument("--model-type", type=str.upper, choices=[m.value for m in ModelType])
    g.add_argument("--feature", type=str.upper, choices=["RAW", "FFT", "MFCC", "FFT_MFCC"])
    g.add_argument("--smoothing", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--smoothing-window", type=int)
    g.add_argument("--scaling", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--pca", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--pca-components", type=int)
    g.add_argument("--span", type=str.upper, choices=["P", "PR"])
    g.add_argument("--mfcc-coeffs", type=int)
    g.add_argument("--press-window-ms", type=float)
    g.add_argument("--release-window-ms", type=float)
    g.add_argument("--k", type=_k, help="cluster count, 'auto' or 'truth'")


def load_config(path=None) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    return dict(doc.get("pipeline", doc))


def config_from_args(args) -> PipelineConfig:
    doc = load_config(args.config)
    for name in CONFIG_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            doc[name] = value
    try:
        return hypersearch.validate(PipelineConfig.from_json(doc))
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(str(exc)) from exc


# -------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    if args.preset == "appendix":
        out = Path(args.output)
        written = generate_corpus(out, sample_ids=tuple(args.sample_ids), snr_db=args.snr,
                                  kit_seeds=[args.kit_seed + i for i in range(len(args.sample_ids))],
                                  seed=args.seed)
        print(f"wrote {len(written)} recordings to {out}")
        return EXIT_OK
    if not args.passphrase:
        raise UsageError("synth needs --passphrase or --preset appendix")
    sample = synth_recording(args.passphrase, kit_seed=args.kit_seed, snr_db=args.snr, rng=args.seed,
                             sample_id=args.sample_ids[0])
    truth = args.truth or Path(args.output).with_suffix(".json")
    write_sample(sample, args.output, truth)
    print(f"wrote {args.output} ({len(sample.onsets)} keystrokes) and {truth}")
    return EXIT_OK


def cmd_segment(args) -> int:
    rec = load_wav(args.wav)
    onsets = detect_keystrokes(energy_for(rec), args.threshold, args.min_gap_ms, args.expected)
    doc = save_segments(args.output, rec, onsets, args.span, args.press_window_ms, args.release_window_ms)
    print(f"{len(onsets)} keystrokes, segment length {doc['segment_len']} samples -> {args.output}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    doc = json.loads(Path(args.input).read_text())
    if "rows" in doc:
        fm = FeatureMatrix.from_json(doc)
    else:
        if args.wav is None:
            raise UsageError("clustering segments.json needs --wav with the recording")
        seg = load_segments(args.input)
        cfg = config_from_args(args)
        if args.span is None:
            cfg = hypersearch.with_overrides(cfg, span=seg["span"], press_window_ms=seg["window_ms"]["press"],
                                             release_window_ms=seg["window_ms"]["release"])
        fm = hypersearch.build_features(load_wav(args.wav), seg["onsets"], cfg)
        if args.features:
            save_features(args.features, fm)
    k_opt = args.k if args.k is not None else "auto"
    if k_opt == "truth":
        raise UsageError("--k truth is only available with labelled samples")
    cfg_k = PipelineConfig(k=k_opt)
    k = hypersearch.resolve_k(cfg_k, fm, seed=args.seed)
    sets = cluster_sets(fm, k, args.sets, args.seed)
    save_clusterings(args.output, sets[0] if args.sets == 1 else sets)
    print(f"k={k}, {args.sets} cluster set(s) -> {args.output}")
    return EXIT_OK


def cmd_hypersearch(args) -> int:
    types = {"kmeans": (ModelType.KMEANS,), "xcorr": (ModelType.XCORR,),
             "both": (ModelType.KMEANS, ModelType.XCORR)}[args.model_type]
    samples = hypersearch.load_samples(args.samples, args.limit)
    if not samples:
        raise DataError(f"no labelled recordings (X.wav + X.json) in {args.samples}")
    rep = hypersearch.search(SearchSpace(types, k=args.k or "truth"), args.trials, samples,
                             args.seed, args.workers)
    hypersearch.save_report(args.output, rep)
    best = rep.best()
    if best is not None:
        print(f"best of {rep.trials}: {best.config.model_type.value}/{best.config.feature.value} "
              f"median {best.summary.median:.2f} mean {best.summary.mean:.2f}")
    return EXIT_OK


def cmd_demod(args) -> int:
    wl = load_wordlist(args.wordlist)
    sets = load_clusterings(args.clusters)
    results = []
    for i, c in enumerate(sets):
        try:
            results.append(recover(c, wl, args.expected_words, args.tries, args.cap, i))
        except KeyclinkError as exc:
            print(f"cluster set {i}: {exc}", file=sys.stderr)
    if not results:
        print("no cluster set produced any word", file=sys.stderr)
        return EXIT_NO_RECOVERY
    merged = merge_recoveries(results) if len(results) > 1 else results[0]
    save_recovery(args.output, merged, {"sets": len(sets)})
    print(" ".join(p.word or "?" for p in merged.positions))
    return EXIT_OK if merged.words_recovered or merged.partial_count else EXIT_NO_RECOVERY


def cmd_combine(args) -> int:
    wl = load_wordlist(args.wordlist)
    merged = load_recovery(args.recovery)
    doc = combiner.combine(merged, wl, args.budget, args.truth)
    combiner.save_combine(args.output, doc)
    line = f"count 2^{doc['exponent']:.2f}"
    if "outcome" in doc:
        line += f", {doc['outcome']} after {doc['attempts']} attempts"
    print(line)
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = config_from_args(args)
    wl = load_wordlist(args.wordlist)
    opts = report.AttackOptions(seed=args.seed, workers=args.workers, combine=args.combine,
                                combine_budget=args.budget, truth_counts=args.truth_counts,
                                delimiter_tries=args.tries, solution_cap=args.cap)
    counts = sorted(set(args.sweep or []) | {args.sets})
    reports = report.attack_sweep(args.input, cfg, counts, wl, opts)
    main_report = reports[args.sets]
    report.save_report_json(args.output, main_report)
    if args.csv:
        report.report_matrix(main_report, "csv", args.csv)
    if args.svg:
        report.report_matrix(main_report, "svg", args.svg, args.order)
    if args.curve:
        if len(reports) < 2:
            raise UsageError("--curve needs --sweep with at least one other set count")
        Path(args.curve).write_text(report.curve_csv(report.recovery_curve(reports)))
    print(report.matrix_text(main_report, args.order), end="")
    found = any(c.status in (report.CellStatus.FULL, report.CellStatus.PARTIAL)
                for c in main_report.cells)
    return EXIT_OK if found else EXIT_NO_RECOVERY


def cmd_report(args) -> int:
    reports = [report.load_report_json(p) for p in args.reports]
    if args.curve:
        text = report.curve_csv(report.recovery_curve(reports))
        if args.output:
            Path(args.output).write_text(text)
        else:
            print(text, end="")
        return EXIT_OK
    if len(reports) != 1:
        raise UsageError("give exactly one report unless --curve is set")
    text = report.report_matrix(reports[0], args.format, args.output, args.order)
    if not args.output:
        print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="keyclink", description="Recover Diceware passphrases from keyboard audio.")
    p.add_argument("--seed", type=int, default=None, help="default: $KEYCLINK_SEED or 0")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="synthesize keystroke recordings with ground truth")
    s.add_argument("--passphrase")
    s.add_argument("--preset", choices=["appendix"])
    s.add_argument("--snr", type=_float, default=20.0)
    s.add_argument("--kit-seed", type=int, default=0)
    s.add_argument("--sample-ids", nargs="+", default=["s0"])
    s.add_argument("-o", "--output", required=True, help="WAV file, or directory with --preset")
    s.add_argument("--truth", type=Path)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("segment", help="detect keystrokes and write segments.json")
    s.add_argument("wav", type=Path)
    s.add_argument("--span", type=str.upper, choices=["P", "PR"], default="P")
    s.add_argument("--press-window-ms", type=float, default=PRESS_WINDOW_MS)
    s.add_argument("--release-window-ms", type=float, default=RELEASE_WINDOW_MS)
    s.add_argument("--threshold", type=float, default=THRESHOLD_FACTOR)
    s.add_argument("--min-gap-ms", type=float, default=MIN_GAP_MS)
    s.add_argument("--expected", type=int)
    s.add_argument("-o", "--output", type=Path, required=True)
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("cluster", help="cluster features.json or segments.json (+ --wav)")
    s.add_argument("input", type=Path)
    s.add_argument("--wav", type=Path)
    s.add_argument("--sets", type=int, default=1)
    s.add_argument("--features", type=Path, help="also write the feature matrix here")
    s.add_argument("-o", "--output", type=Path, required=True)
    _add_config_flags(s)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("hypersearch", help="random search over pipeline configurations")
    s.add_argument("--model-type", choices=["kmeans", "xcorr", "both"], default="both")
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--samples", type=Path, required=True)
    s.add_argument("--limit", type=int, default=20, help="number of samples used")
    s.add_argument("--k", type=_k, default="truth")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("-o", "--output", type=Path, required=True)
    s.set_defaults(func=cmd_hypersearch)

    s = sub.add_parser("demod", help="dictionary attack on clusters.json")
    s.add_argument("clusters", type=Path)
    s.add_argument("--wordlist", type=Path)
    s.add_argument("--expected-words", type=int)
    s.add_argument("--tries", type=int, default=DELIMITER_TRIES)
    s.add_argument("--cap", type=int, default=SOLUTION_CAP)
    s.add_argument("-o", "--output", type=Path, required=True)
    s.set_defaults(func=cmd_demod)

    s = sub.add_parser("combine", help="count and enumerate candidate passphrases")
    s.add_argument("recovery", type=Path)
    s.add_argument("--wordlist", type=Path)
    s.add_argument("--budget", type=combiner.parse_budget, default=None)
    s.add_argument("--truth", help="true passphrase; enables the built-in oracle")
    s.add_argument("-o", "--output", type=Path, required=True)
    s.set_defaults(func=cmd_combine)

    s = sub.add_parser("attack", help="end-to-end attack over a directory of recordings")
    s.add_argument("input", type=Path, help="WAV file or directory")
    s.add_argument("--sets", type=int, default=10)
    s.add_argument("--sweep", type=lambda t: [int(x) for x in t.split(",")],
                   help="extra set counts, e.g. 1,5,10,20,50")
    s.add_argument("--wordlist", type=Path)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--combine", action="store_true")
    s.add_argument("--budget", type=combiner.parse_budget, default=2 ** 20)
    s.add_argument("--truth-counts", action="store_true",
                   help="use keystroke and word counts from truth files")
    s.add_argument("--tries", type=int, default=DELIMITER_TRIES)
    s.add_argument("--cap", type=int, default=SOLUTION_CAP)
    s.add_argument("--order", choices=["index", "length"], default="index")
    s.add_argument("-o", "--output", type=Path, required=True, help="report.json")
    s.add_argument("--csv", type=Path)
    s.add_argument("--svg", type=Path)
    s.add_argument("--curve", type=Path, help="recovery curve CSV over --sweep")
    _add_config_flags(s)
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("report", help="render attack reports")
    s.add_argument("reports", type=Path, nargs="+")
    s.add_argument("--format", default="text", help="csv, svg or text")
    s.add_argument("--order", choices=["index", "length"], default="index")
    s.add_argument("--curve", action="store_true", help="recovery curve over several reports")
    s.add_argument("-o", "--output", type=Path)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is None:
            args.seed = default_seed()
        return args.func(args)
    except (UsageError, InvalidConfig) as exc:
        print(f"keyclink {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, KeyclinkError, OSError, ValueError, KeyError, json.JSONDecodeError,
            tomllib.TOMLDecodeError) as exc:
        print(f"keyclink {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
