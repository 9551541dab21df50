"""CSV/JSON writers for pipeline outputs (comma, '.', UTF-8, LF)."""
from __future__ import annotations

import csv
import io

from .dataset import format_float as ff
from .evaluation import tippett_data
from .shapes import effect_shapes


def _table(header, rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return out.getvalue()


def metrics_csv(results) -> str:
    """One row per system, Table-1 style: label, EER (%), Cllr."""
    return _table(
        ["system", "eer_percent", "cllr"],
        [[r.label, ff(r.metrics.eer_percent), ff(r.metrics.cllr)] for r in results],
    )


def scores_csv(results) -> str:
    rows = []
    for r in results:
        for (a, b), s, same, llr in zip(r.raw_scores.pairs, r.raw_scores.scores,
                                        r.raw_scores.is_same, r.calibrated):
            rows.append([r.label, a, b, "same" if same else "different", ff(s), ff(llr)])
    return _table(["system", "target", "candidate", "label", "raw_score", "log10_lr"], rows)


def tippett_csv(results) -> str:
    rows = []
    for r in results:
        curves = tippett_data(r.calibrated, r.raw_scores.is_same)
        for label in ("same", "different"):
            x, prop = curves[label]
            rows.extend([r.label, label, ff(v), ff(pv)] for v, pv in zip(x, prop))
    return _table(["system", "label", "log10_lr", "proportion"], rows)


def aligned_csv(trials, aligned) -> str:
    k = aligned.mean_shape.shape[0]
    header = ["trial_id", "speaker", "centroid_size"] + [f"{a}{j}" for j in range(1, k + 1) for a in "xy"]
    rows = [
        [t.trial_id, t.speaker_id, ff(cs)] + [ff(v) for v in cfg.ravel()]
        for t, cs, cfg in zip(trials, aligned.centroid_sizes, aligned.aligned)
    ]
    return _table(header, rows)


def loadings_csv(pca) -> str:
    k = pca.components.shape[0] // 2
    coords = [f"{a}{j}" for j in range(1, k + 1) for a in "xy"]
    header = ["coordinate", "mean"] + [f"PC{i + 1}" for i in range(pca.q)]
    rows = [[c, ff(pca.mean_vector[i])] + [ff(v) for v in pca.components[i]] for i, c in enumerate(coords)]
    return _table(header, rows)


def pc_scores_csv(trials, scores) -> str:
    header = ["trial_id", "speaker", "vowel"] + [f"PC{i + 1}" for i in range(scores.shape[1])]
    rows = [[t.trial_id, t.speaker_id, t.vowel] + [ff(v) for v in s] for t, s in zip(trials, scores)]
    return _table(header, rows)


def explained_csv(pca) -> str:
    total = pca.all_variances.sum()
    rows, cum = [], 0.0
    for i, v in enumerate(pca.all_variances[: pca.rank]):
        cum += v / total
        rows.append([f"PC{i + 1}", ff(v), ff(v / total), ff(cum)])
    return _table(["component", "variance", "explained_ratio", "cumulative"], rows)


def effect_shapes_csv(pca, sd_multiples=(-3.0, 0.0, 3.0)) -> str:
    rows = []
    for pc in range(1, pca.q + 1):
        for es in effect_shapes(pca, pc, sd_multiples):
            for j, (x, y) in enumerate(es.shape, start=1):
                rows.append([f"PC{pc}", ff(es.sd_multiple), j, ff(x), ff(y)])
    return _table(["component", "sd_multiple", "landmark", "x", "y"], rows)


def correlations_csv(entries) -> str:
    return _table(
        ["pc_i", "pc_j", "statistic", "r", "p", "flagged"],
        [[f"PC{e.pc_i}", f"PC{e.pc_j}", e.statistic, ff(e.r), ff(e.p), int(e.flagged)] for e in entries],
    )
