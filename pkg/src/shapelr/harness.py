"""Cross-validated LR experiment over PC feature combinations."""
from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import SpeakerDataset, mad_outlier_filter, split_halves
from .evaluation import (
    CalibrationModel,
    ScoreSet,
    SystemMetrics,
    fit_calibration,
    system_metrics,
)
from .mvkd import estimate_population, mvkd_log10_lr_many
from .shapes import (
    SIZE_AND_SHAPE,
    AlignedShapeSet,
    PCModel,
    _check_mode,
    fit_pca,
    pearson_correlation,
    procrustes_align,
    tangent_coordinates,
)

DEFAULT_FEATURE_SETS = ((1,), (2,), (3,), (1, 2), (1, 3), (2, 3), (1, 2, 3))
CALIBRATIONS = ("pooled", "leave-pair-out")
PCA_FITS = ("pooled", "first-half")
THREADS_ENV = "SHAPELR_THREADS"


class ExperimentError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


def feature_label(fs) -> str:
    return "PC" + "+".join(str(i) for i in fs)


def parse_feature_sets(text: str):
    """``"1;2;1+3"`` -> ``((1,), (2,), (1, 3))``."""
    out = []
    for item in text.replace(",", ";").split(";"):
        item = item.strip().upper().removeprefix("PC")
        if not item:
            continue
        out.append(tuple(int(x) for x in item.split("+")))
    return tuple(out)


@dataclass
class ExperimentConfig:
    mode: str = SIZE_AND_SHAPE
    feature_sets: tuple = DEFAULT_FEATURE_SETS
    mad_threshold: float = 3.5
    seed: int = 0
    calibration: str = "pooled"
    q: int = 3
    pca_fit: str = "pooled"
    subtract_within: bool = False
    apply_filter: bool = True

    def __post_init__(self):
        self.mode = _check_mode(self.mode)
        self.feature_sets = tuple(tuple(int(i) for i in fs) for fs in self.feature_sets)
        if not self.feature_sets:
            raise ValueError("no feature sets")
        for fs in self.feature_sets:
            if not fs or len(set(fs)) != len(fs):
                raise ValueError(f"invalid feature set {fs}")
            if min(fs) < 1 or max(fs) > self.q:
                raise ValueError(f"feature set {feature_label(fs)} outside fitted q={self.q}")
        if self.calibration not in CALIBRATIONS:
            raise ValueError(f"calibration must be one of {CALIBRATIONS}")
        if self.pca_fit not in PCA_FITS:
            raise ValueError(f"pca_fit must be one of {PCA_FITS}")
        if not self.mad_threshold > 0:
            raise ValueError("mad_threshold must be positive")

    def as_dict(self):
        return {
            "mode": self.mode,
            "feature_sets": ";".join("+".join(map(str, fs)) for fs in self.feature_sets),
            "mad_threshold": self.mad_threshold,
            "seed": self.seed,
            "calibration": self.calibration,
            "q": self.q,
            "pca_fit": self.pca_fit,
            "subtract_within": self.subtract_within,
            "apply_filter": self.apply_filter,
        }


@dataclass
class PreparedData:
    dataset: SpeakerDataset
    removal: object
    aligned: AlignedShapeSet
    tangent: np.ndarray
    pca: PCModel
    scores: np.ndarray  # (n, q) PC scores, rows follow dataset.trials
    splits: list
    timings: dict = field(default_factory=dict)

    @property
    def speakers(self):
        return self.dataset.speakers


@dataclass
class SystemResult:
    feature_set: tuple
    mode: str
    raw_scores: ScoreSet
    calibrated: np.ndarray
    metrics: SystemMetrics
    calibration: CalibrationModel | None
    references: list  # per comparison, the reference speakers used

    @property
    def label(self):
        return feature_label(self.feature_set)


def _stage(name, fn, timings, *args, **kwargs):
    t0 = time.perf_counter()
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise ExperimentError(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - t0


def prepare(ds: SpeakerDataset, cfg: ExperimentConfig) -> PreparedData:
    """Filter, align, project and split; everything upstream of scoring."""
    timings = {}
    report = None
    if cfg.apply_filter:
        ds, report = _stage("filter", mad_outlier_filter, timings, ds, cfg.mad_threshold)
    aligned = _stage("align", procrustes_align, timings, ds.configs, cfg.mode)
    tangent = _stage("tangent", tangent_coordinates, timings, aligned)
    splits = _stage("split", split_halves, timings, ds, cfg.seed)
    mean_vec = aligned.mean_shape.reshape(-1)
    if cfg.pca_fit == "pooled":
        pca = _stage("pca", fit_pca, timings, tangent, cfg.q, mean_vec)
        scores = pca.scores
    else:
        first = set().union(*(s.first_half for s in splits))
        rows = [i for i, t in enumerate(ds.trials) if t.trial_id in first]
        pca = _stage("pca", fit_pca, timings, tangent[rows], cfg.q, mean_vec)
        scores = pca.project(tangent)
    return PreparedData(ds, report, aligned, tangent, pca, scores, splits, timings)


def _thread_ceiling():
    try:
        env = int(os.environ.get(THREADS_ENV, "0"))
    except ValueError:
        env = 0
    ncpu = os.cpu_count() or 1
    return max(1, min(env, ncpu) if env > 0 else ncpu)


def same_speaker_partners(speakers, seed):
    """The one extra speaker left out of each same-speaker comparison's reference."""
    rng = np.random.default_rng([seed, 1])
    partners = {}
    for i, spk in enumerate(speakers):
        others = [s for j, s in enumerate(speakers) if j != i]
        partners[spk] = others[int(rng.integers(len(others)))]
    return partners


def _score_system(prep: PreparedData, fs, cfg, partners):
    cols = [i - 1 for i in fs]
    F = prep.scores[:, cols]
    speakers = prep.speakers
    rows = {s: [] for s in speakers}
    for r, t in enumerate(prep.dataset.trials):
        rows[t.speaker_id].append(r)
    pos = {t.trial_id: r for r, t in enumerate(prep.dataset.trials)}
    first, second = {}, {}
    for sp in prep.splits:
        first[sp.speaker_id] = F[sorted(pos[t] for t in sp.first_half)]
        second[sp.speaker_id] = F[sorted(pos[t] for t in sp.second_half)]
    groups = {s: F[rows[s]] for s in speakers}

    pairs = [(a, b) for a in speakers for b in speakers]
    excluded = [frozenset((a, b)) if a != b else frozenset((a, partners[a])) for a, b in pairs]
    by_pop = {}
    for idx, ex in enumerate(excluded):
        by_pop.setdefault(ex, []).append(idx)

    raw = np.empty(len(pairs))
    references = [None] * len(pairs)
    for ex, idxs in by_pop.items():
        ref = tuple(s for s in speakers if s not in ex)
        pop = estimate_population([groups[s] for s in ref], labels=ref,
                                  subtract_within=cfg.subtract_within)
        A = [first[pairs[i][0]] for i in idxs]
        B = [second[pairs[i][1]] for i in idxs]
        raw[idxs] = mvkd_log10_lr_many(
            np.array([a.mean(axis=0) for a in A]), [len(a) for a in A],
            np.array([b.mean(axis=0) for b in B]), [len(b) for b in B], pop,
        )
        for i in idxs:
            references[i] = ref
    is_same = np.array([a == b for a, b in pairs])
    return ScoreSet(raw, is_same, pairs), references


def _calibrate(ss: ScoreSet, how):
    if how == "pooled":
        model = fit_calibration(ss)
        return model.log10_lr(ss.scores), model
    out = np.empty(len(ss))
    for i, (a, b) in enumerate(ss.pairs):
        keep = np.array([a not in p and b not in p for p in ss.pairs])
        model = fit_calibration(ScoreSet(ss.scores[keep], ss.is_same[keep]))
        out[i] = model.log10_lr(ss.scores[i])
    return out, None


def run_experiment(ds: SpeakerDataset, cfg: ExperimentConfig, prepared: PreparedData | None = None):
    """Score every (first half, second half) speaker pair for each feature set.

    Same-speaker comparisons leave the target and one seeded random other
    speaker out of the reference population; different-speaker comparisons
    leave both compared speakers out. Results come back in ``cfg.feature_sets``
    order; comparisons within a result are in (target, candidate) order.
    """
    prep = prepared or prepare(ds, cfg)
    speakers = prep.speakers
    if len(speakers) - 2 < 3:
        raise ExperimentError(
            "population", f"{len(speakers)} speakers leave a reference population of "
            f"{len(speakers) - 2}; need >= 3 (at least 5 speakers)"
        )
    if max(max(fs) for fs in cfg.feature_sets) > prep.scores.shape[1]:
        raise ExperimentError("features", "feature index beyond fitted components")
    partners = same_speaker_partners(speakers, cfg.seed)

    def one(fs):
        try:
            ss, refs = _score_system(prep, fs, cfg, partners)
        except Exception as exc:
            raise ExperimentError("score", exc) from exc
        try:
            cal, model = _calibrate(ss, cfg.calibration)
            metrics = system_metrics(cal, ss.is_same)
        except Exception as exc:
            raise ExperimentError("calibrate", exc) from exc
        return SystemResult(fs, cfg.mode, ss, cal, metrics, model, refs)

    t0 = time.perf_counter()
    workers = min(_thread_ceiling(), len(cfg.feature_sets))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, cfg.feature_sets))
    else:
        results = [one(fs) for fs in cfg.feature_sets]
    prep.timings["score"] = time.perf_counter() - t0
    return results


@dataclass(frozen=True)
class CorrelationEntry:
    pc_i: int
    pc_j: int
    statistic: str
    r: float
    p: float
    flagged: bool = False


def speaker_level_correlations(scores, speaker_labels, pcs=None):
    """Correlate per-speaker means and SDs of PC scores across speakers.

    Degenerate pairs (zero variance across speakers, or undefined SDs) are
    returned with ``flagged=True`` and NaN statistics.
    """
    S = np.asarray(scores, dtype=float)
    labels = list(speaker_labels)
    speakers = list(dict.fromkeys(labels))
    if len(speakers) < 3:
        raise ValueError("need at least 3 speakers")
    pcs = list(range(1, S.shape[1] + 1)) if pcs is None else list(pcs)
    lab = np.array(labels, dtype=object)
    stats = {
        "mean": np.array([S[lab == s].mean(axis=0) for s in speakers]),
        "sd": np.array(
            [S[lab == s].std(axis=0, ddof=1) if np.sum(lab == s) > 1
             else np.full(S.shape[1], np.nan) for s in speakers]
        ),
    }
    out = []
    for name, M in stats.items():
        for a in range(len(pcs)):
            for b in range(a + 1, len(pcs)):
                x = M[:, pcs[a] - 1]
                y = M[:, pcs[b] - 1]
                try:
                    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
                        raise ValueError("undefined statistic")
                    r, p = pearson_correlation(x, y)
                    out.append(CorrelationEntry(pcs[a], pcs[b], name, r, p))
                except ValueError:
                    out.append(CorrelationEntry(pcs[a], pcs[b], name, np.nan, np.nan, True))
    return out


def speaker_mean_shapes(aligned: AlignedShapeSet, speaker_labels):
    """``{speaker: (k, 2) mean aligned shape}`` in first-appearance order."""
    labels = list(speaker_labels)
    if len(labels) != len(aligned):
        raise ValueError("labels do not match aligned trials")
    lab = np.array(labels, dtype=object)
    return {s: aligned.aligned[lab == s].mean(axis=0) for s in dict.fromkeys(labels)}


def export_speaker_mean_shapes(aligned: AlignedShapeSet, speaker_labels) -> str:
    """Wide CSV: one row per landmark, overall mean then each speaker's mean."""
    from .dataset import format_float

    means = speaker_mean_shapes(aligned, speaker_labels)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    header = ["landmark", "overall_x", "overall_y"]
    for s in means:
        header += [f"{s}_x", f"{s}_y"]
    w.writerow(header)
    for j in range(aligned.mean_shape.shape[0]):
        row = [j + 1, format_float(aligned.mean_shape[j, 0]), format_float(aligned.mean_shape[j, 1])]
        for m in means.values():
            row += [format_float(m[j, 0]), format_float(m[j, 1])]
        w.writerow(row)
    return out.getvalue()
