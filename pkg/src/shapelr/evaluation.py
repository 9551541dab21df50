"""Score calibration and LR system metrics (EER, Cllr, Tippett curves)."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

LN10 = math.log(10.0)
LOG2_10 = math.log2(10.0)
LLR_CAP = 6.0  # log10 units, separation fallback
CLLR_CLAMP = 10.0  # log10 units
GRAD_TOL = 1e-8


class CalibrationWarning(UserWarning):
    pass


@dataclass
class ScoreSet:
    scores: np.ndarray
    is_same: np.ndarray
    pairs: list = field(default_factory=list)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        self.is_same = np.asarray(self.is_same, dtype=bool)
        if self.scores.shape != self.is_same.shape:
            raise ValueError("scores and labels differ in length")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")

    @classmethod
    def from_lists(cls, same, different):
        same = np.asarray(same, dtype=float)
        different = np.asarray(different, dtype=float)
        return cls(
            np.concatenate([same, different]),
            np.concatenate([np.ones(same.size, bool), np.zeros(different.size, bool)]),
        )

    def __len__(self):
        return self.scores.size

    @property
    def same(self):
        return self.scores[self.is_same]

    @property
    def different(self):
        return self.scores[~self.is_same]

    @property
    def n_same(self):
        return int(self.is_same.sum())

    @property
    def n_different(self):
        return int((~self.is_same).sum())

    def require_both_labels(self):
        if self.n_same == 0 or self.n_different == 0:
            raise ValueError("need at least one same-source and one different-source entry")


@dataclass(frozen=True)
class CalibrationModel:
    weight: float
    offset: float
    separated: bool = False

    def log10_lr(self, scores):
        return (self.weight * np.asarray(scores, dtype=float) + self.offset) / LN10


@dataclass(frozen=True)
class SystemMetrics:
    eer_percent: float
    cllr: float
    n_same: int
    n_different: int

    def to_json_dict(self):
        return {
            "eer_percent": self.eer_percent,
            "cllr": self.cllr,
            "n_same": self.n_same,
            "n_different": self.n_different,
        }


def _weighted_loss(theta, s, y, w):
    z = theta[0] * s + theta[1]
    # -log sigmoid(+-z) = logaddexp(0, -+z)
    return float(np.sum(w * np.where(y, np.logaddexp(0.0, -z), np.logaddexp(0.0, z))))


def _newton(s, y, w, cap=None, max_iter=200):
    theta = np.zeros(2)
    X = np.column_stack([s, np.ones_like(s)])
    loss = _weighted_loss(theta, s, y, w)
    for _ in range(max_iter):
        z = X @ theta
        pr = expit(z)
        g = X.T @ (w * (pr - y))
        if np.linalg.norm(g) < GRAD_TOL:
            break
        Hm = (X * (w * pr * (1 - pr))[:, None]).T @ X
        try:
            step = -np.linalg.solve(Hm + 1e-12 * np.eye(2), g)
        except np.linalg.LinAlgError:
            step = -g
        if cap is not None:
            zmax = np.max(np.abs(X @ (theta + step)))
            if zmax > cap:
                lo, hi = 0.0, 1.0
                for _ in range(100):
                    mid = 0.5 * (lo + hi)
                    if np.max(np.abs(X @ (theta + mid * step))) > cap:
                        hi = mid
                    else:
                        lo = mid
                return theta + lo * step
        lam = 1.0
        while lam > 1e-10:
            cand = theta + lam * step
            cand_loss = _weighted_loss(cand, s, y, w)
            if cand_loss <= loss + 1e-4 * lam * float(g @ step):
                break
            lam *= 0.5
        theta, loss = cand, cand_loss
    return theta


def fit_calibration(scores: ScoreSet) -> CalibrationModel:
    """Logistic-regression calibration of raw scores with equal class priors.

    Each class carries total weight one half, so the fitted logit is a natural
    log LR; calibrated ``log10 LR = (weight * s + offset) / ln 10``. For
    perfectly separated training data the Newton path is stopped where the most
    extreme training score reaches ``LLR_CAP`` log10 units. A decreasing fit is
    replaced by the neutral map (weight 0) with a warning.
    """
    scores.require_both_labels()
    s = scores.scores
    y = scores.is_same.astype(float)
    if np.all(s == s[0]):
        raise ValueError("all scores identical; nothing to calibrate")
    w = np.where(scores.is_same, 0.5 / scores.n_same, 0.5 / scores.n_different)
    loc = float(s.mean())
    sc = float(s.std())
    if not sc > 0:
        # squared deviations underflowed; the range is still usable
        sc = float(np.ptp(s))
    z = (s - loc) / sc
    separated = bool(scores.same.min() >= scores.different.max())
    theta = _newton(z, y, w, cap=LLR_CAP * LN10 if separated else None)
    weight = theta[0] / sc
    offset = theta[1] - weight * loc
    if weight < 0:
        warnings.warn("calibration slope is negative (inverted scores); using neutral map",
                      CalibrationWarning, stacklevel=2)
        return CalibrationModel(0.0, 0.0, separated)
    return CalibrationModel(float(weight), float(offset), separated)


def equal_error_rate(scores: ScoreSet) -> float:
    """EER in percent with linear interpolation between sweep thresholds.

    At threshold ``t`` a same-source score below ``t`` is a false rejection and
    a different-source score at or above ``t`` a false acceptance. Thresholds
    run over the sorted distinct scores plus one beyond the maximum.
    """
    scores.require_both_labels()
    same = np.sort(scores.same)
    diff = np.sort(scores.different)
    th = np.unique(scores.scores)
    frr = np.searchsorted(same, th, side="left") / same.size
    far = 1.0 - np.searchsorted(diff, th, side="left") / diff.size
    frr = np.append(frr, 1.0)
    far = np.append(far, 0.0)
    g = frr - far
    i = int(np.argmax(g >= 0))
    if i == 0 or g[i] == 0:
        return float(100.0 * far[i])
    alpha = -g[i - 1] / (g[i] - g[i - 1])
    return float(100.0 * (far[i - 1] + alpha * (far[i] - far[i - 1])))


def cllr(log10_lrs, is_same) -> float:
    """Log-likelihood-ratio cost in bits; 1 for a system always reporting LR = 1."""
    # base-2 throughout so a neutral entry costs exactly one bit
    llr = np.clip(np.asarray(log10_lrs, dtype=float), -CLLR_CLAMP, CLLR_CLAMP) * LOG2_10
    lab = np.asarray(is_same, dtype=bool)
    if not lab.any() or lab.all():
        raise ValueError("need at least one same-source and one different-source entry")
    c_same = np.mean(np.logaddexp2(0.0, -llr[lab]))
    c_diff = np.mean(np.logaddexp2(0.0, llr[~lab]))
    return float(0.5 * (c_same + c_diff))


def system_metrics(log10_lrs, is_same) -> SystemMetrics:
    ss = ScoreSet(log10_lrs, is_same)
    return SystemMetrics(equal_error_rate(ss), cllr(log10_lrs, is_same), ss.n_same, ss.n_different)


def tippett_data(log10_lrs, is_same):
    """Empirical CDFs of log10 LR per label.

    Returns ``{"same": (x, prop), "different": (x, prop)}`` with `x` sorted and
    ``prop[i]`` the fraction of that label's entries at or below ``x[i]``.
    """
    llr = np.asarray(log10_lrs, dtype=float)
    lab = np.asarray(is_same, dtype=bool)
    if llr.size == 0:
        raise ValueError("no entries")
    out = {}
    for name, mask in (("same", lab), ("different", ~lab)):
        x = np.sort(llr[mask])
        out[name] = (x, np.arange(1, x.size + 1) / x.size if x.size else np.empty(0))
    return out
