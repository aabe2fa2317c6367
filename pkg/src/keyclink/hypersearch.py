"""Pipeline configurations and a seeded random search over them."""

from __future__ import annotations

import enum
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio import AudioRecording, load_wav
from .clustering import Clustering, ScoreSummary, estimate_k, kmeans, score_clustering
from .errors import InvalidConfig, KeyclinkError, PipelineFailure
from .features import (MFCC_N_COEFFS, Feature, FeatureMatrix, feature_matrix, pca_reduce,
                       standardize, xcorr_similarity)
from .segmentation import PRESS_WINDOW_MS, RELEASE_WINDOW_MS, Span, extract_spans


class ModelType(str, enum.Enum):
    KMEANS = "KMEANS"
    XCORR = "XCORR"


LEGAL_FEATURES = {
    ModelType.KMEANS: (Feature.FFT, Feature.MFCC, Feature.FFT_MFCC),
    ModelType.XCORR: (Feature.RAW, Feature.FFT, Feature.MFCC),
}
PCA_RANGE = {ModelType.KMEANS: (1, 20), ModelType.XCORR: (1, 12)}
SMOOTHING_RANGE = (5, 300)


@dataclass(frozen=True)
class PipelineConfig:
    model_type: ModelType = ModelType.XCORR
    feature: Feature = Feature.RAW
    smoothing: bool = False
    smoothing_window: int = 5
    scaling: bool = False
    pca: bool = False
    pca_components: int = 1
    span: Span = Span.P
    mfcc_coeffs: int = MFCC_N_COEFFS
    press_window_ms: float = PRESS_WINDOW_MS
    release_window_ms: float = RELEASE_WINDOW_MS
    # "truth" (distinct keys of the labelled sample), "auto" (estimate_k) or a number
    k: int | str = "auto"

    def __post_init__(self):
        object.__setattr__(self, "model_type", ModelType(self.model_type))
        object.__setattr__(self, "feature", Feature(self.feature))
        object.__setattr__(self, "span", Span(self.span))
        if isinstance(self.k, str) and self.k.isdigit():
            object.__setattr__(self, "k", int(self.k))

    def to_json(self) -> dict:
        doc = asdict(self)
        for key in ("model_type", "feature", "span"):
            doc[key] = doc[key].value
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise InvalidConfig(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]

    def mfcc_params(self) -> dict:
        return {"n_coeffs": self.mfcc_coeffs}


def validate(cfg: PipelineConfig) -> PipelineConfig:
    if cfg.feature not in LEGAL_FEATURES[cfg.model_type]:
        raise InvalidConfig(f"feature {cfg.feature.value} is not legal for {cfg.model_type.value}")
    lo, hi = SMOOTHING_RANGE
    if not lo <= cfg.smoothing_window <= hi:
        raise InvalidConfig(f"smoothing_window must be in [{lo}, {hi}]")
    lo, hi = PCA_RANGE[cfg.model_type]
    if not lo <= cfg.pca_components <= hi:
        raise InvalidConfig(f"pca_components must be in [{lo}, {hi}] for {cfg.model_type.value}")
    if not 1 <= cfg.mfcc_coeffs <= 40:
        raise InvalidConfig("mfcc_coeffs must be in [1, 40]")
    if cfg.press_window_ms <= 0 or cfg.release_window_ms <= 0:
        raise InvalidConfig("window lengths must be positive")
    if not (cfg.k in ("auto", "truth") or (isinstance(cfg.k, int) and cfg.k >= 1)):
        raise InvalidConfig(f"k must be 'auto', 'truth' or a positive integer, not {cfg.k!r}")
    return cfg


@dataclass(frozen=True)
class SearchSpace:
    model_types: tuple[ModelType, ...] = (ModelType.KMEANS, ModelType.XCORR)
    mfcc_coeffs: tuple[int, ...] = (13, 20, 36)
    k: int | str = "truth"

    def __post_init__(self):
        types = tuple(ModelType(m) for m in self.model_types)
        if not types or not self.mfcc_coeffs:
            raise ValueError("search space is empty")
        object.__setattr__(self, "model_types", types)


def sample_config(space: SearchSpace, rng) -> PipelineConfig:
    """One uniform draw per hyperparameter, restricted to what the model type allows."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    model = space.model_types[int(rng.integers(len(space.model_types)))]
    feats = LEGAL_FEATURES[model]
    lo, hi = PCA_RANGE[model]
    cfg = PipelineConfig(
        model_type=model,
        feature=feats[int(rng.integers(len(feats)))],
        smoothing=bool(rng.integers(2)),
        smoothing_window=int(rng.integers(SMOOTHING_RANGE[0], SMOOTHING_RANGE[1] + 1)),
        scaling=bool(rng.integers(2)),
        pca=bool(rng.integers(2)),
        pca_components=int(rng.integers(lo, hi + 1)),
        span=(Span.P, Span.PR)[int(rng.integers(2))],
        mfcc_coeffs=int(space.mfcc_coeffs[int(rng.integers(len(space.mfcc_coeffs)))]),
        k=space.k,
    )
    return validate(cfg)


def build_features(rec: AudioRecording, onsets, cfg: PipelineConfig) -> FeatureMatrix:
    """Segments -> feature rows -> [similarity] -> [scaling] -> [PCA]."""
    segments = extract_spans(rec, onsets, cfg.span, cfg.press_window_ms, cfg.release_window_ms)
    fm = feature_matrix(segments, rec.sample_rate, cfg.feature,
                        smoothing_window=cfg.smoothing_window if cfg.smoothing else None,
                        mfcc=cfg.mfcc_params() if cfg.feature in (Feature.MFCC, Feature.FFT_MFCC) else None)
    if cfg.model_type is ModelType.XCORR:
        fm = xcorr_similarity(fm)
    if cfg.scaling:
        fm = standardize(fm)
    if cfg.pca:
        d = min(cfg.pca_components, len(fm) - 1, fm.dim)
        if d >= 1:
            fm = pca_reduce(fm, d)
    return fm


def resolve_k(cfg: PipelineConfig, fm: FeatureMatrix, truth=None, seed: int = 0) -> int:
    n = len(fm)
    if cfg.k == "truth":
        if truth is None:
            raise InvalidConfig("k='truth' needs labelled samples")
        k = len(set(truth))
    elif cfg.k == "auto":
        k = estimate_k(fm, seed=seed)
    else:
        k = int(cfg.k)
    return max(1, min(k, n))


@dataclass(frozen=True, eq=False)
class EvalSample:
    recording: AudioRecording
    onsets: tuple[int, ...]
    labels: tuple[str, ...]
    sample_id: str
    passphrase: tuple[str, ...] = ()


def load_samples(directory, limit: int | None = None) -> list[EvalSample]:
    """Labelled recordings: every ``X.wav`` with a ``X.json`` truth file, by name."""
    directory = Path(directory)
    out = []
    for wav in sorted(directory.glob("*.wav")):
        truth_path = wav.with_suffix(".json")
        if not truth_path.exists():
            continue
        truth = json.loads(truth_path.read_text())
        rec = load_wav(wav)
        rec = AudioRecording(rec.samples, rec.sample_rate, truth.get("source_id", wav.stem))
        out.append(EvalSample(rec, tuple(truth["onsets"]), tuple(truth["labels"]),
                              truth.get("source_id", wav.stem), tuple(truth.get("passphrase", ()))))
        if limit is not None and len(out) >= limit:
            break
    return out


def as_eval_sample(synthetic) -> EvalSample:
    return EvalSample(synthetic.recording, tuple(synthetic.onsets), tuple(synthetic.labels),
                      synthetic.recording.source_id, tuple(synthetic.passphrase))


def cluster_sample(sample: EvalSample, cfg: PipelineConfig, seed: int = 0) -> Clustering:
    try:
        fm = build_features(sample.recording, sample.onsets, cfg)
    except (KeyclinkError, ValueError) as exc:
        raise PipelineFailure(sample.sample_id, "features", exc) from exc
    try:
        return kmeans(fm, resolve_k(cfg, fm, sample.labels, seed), seed)
    except (KeyclinkError, ValueError) as exc:
        raise PipelineFailure(sample.sample_id, "clustering", exc) from exc


def evaluate_config(cfg: PipelineConfig, samples, seed: int = 0) -> ScoreSummary:
    """Score one configuration on labelled samples using their true onsets."""
    samples = list(samples)
    if not samples:
        raise ValueError("no samples to evaluate")
    validate(cfg)
    scores = []
    for sample in samples:
        if not isinstance(sample, EvalSample):
            sample = as_eval_sample(sample)
        c = cluster_sample(sample, cfg, seed)
        scores.append(score_clustering(c, sample.labels))
    return ScoreSummary.of(scores)


@dataclass(frozen=True)
class SearchEntry:
    config: PipelineConfig
    summary: ScoreSummary
    trial: int

    def sort_key(self):
        return (-self.summary.median, -self.summary.mean, self.config.digest(), self.trial)

    def to_json(self) -> dict:
        return {"trial": self.trial, "config_hash": self.config.digest(),
                "config": self.config.to_json(), **self.summary.to_json()}


@dataclass(frozen=True)
class SearchReport:
    entries: tuple[SearchEntry, ...]
    trials: int
    sample_ids: tuple[str, ...]
    seed: int
    failures: tuple[dict, ...] = field(default=())

    def best(self, model_type: ModelType | str | None = None) -> SearchEntry | None:
        for e in self.entries:
            if model_type is None or e.config.model_type is ModelType(model_type):
                return e
        return None

    def to_json(self) -> dict:
        return {"trials": self.trials, "seed": self.seed, "sample_ids": list(self.sample_ids),
                "entries": [e.to_json() for e in self.entries], "failures": list(self.failures)}

    @classmethod
    def from_json(cls, doc) -> "SearchReport":
        entries = tuple(SearchEntry(PipelineConfig.from_json(e["config"]), ScoreSummary.from_json(e),
                                    e["trial"]) for e in doc["entries"])
        return cls(entries, doc["trials"], tuple(doc["sample_ids"]), doc["seed"],
                   tuple(doc.get("failures", ())))


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


def _run_trial(args):
    space, samples, seed, trial = args
    cfg = sample_config(space, trial_rng(seed, trial))
    try:
        return trial, cfg, evaluate_config(cfg, samples, seed), None
    except PipelineFailure as exc:
        return trial, cfg, None, {"trial": trial, "sample_id": exc.sample_id, "stage": exc.stage,
                                  "error": str(exc.cause)}


def search(space: SearchSpace, trials: int, samples, seed: int = 0,
           workers: int = 1) -> SearchReport:
    """Evaluate ``trials`` sampled configurations and rank them by median score.

    Trial ``i`` draws its configuration from a generator seeded by
    ``(seed, i)``, so the report does not depend on ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    samples = [s if isinstance(s, EvalSample) else as_eval_sample(s) for s in samples]
    if not samples:
        raise ValueError("no samples to search on")
    jobs = [(space, samples, seed, t) for t in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_trial, jobs, chunksize=max(1, trials // (4 * workers))))
    else:
        results = [_run_trial(j) for j in jobs]
    entries = [SearchEntry(cfg, summary, t) for t, cfg, summary, err in results if summary is not None]
    failures = tuple(err for *_, err in results if err is not None)
    entries.sort(key=SearchEntry.sort_key)
    return SearchReport(tuple(entries), trials, tuple(s.sample_id for s in samples), seed, failures)


def save_report(path, report: SearchReport) -> None:
    Path(path).write_text(json.dumps(report.to_json(), indent=1))


def with_overrides(cfg: PipelineConfig, **changes) -> PipelineConfig:
    changes = {k: v for k, v in changes.items() if v is not None}
    return validate(replace(cfg, **changes))
