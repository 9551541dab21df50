import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapelr.evaluation import (
    CalibrationWarning,
    ScoreSet,
    cllr,
    equal_error_rate,
    fit_calibration,
    system_metrics,
    tippett_data,
)


def oracle_eer(same, different):
    """Intersect the piecewise-linear (FAR, FRR) curve with the diagonal.

    Thresholds are every midpoint between distinct scores plus both ends,
    evaluated by brute-force counting.
    """
    allv = sorted(set(same) | set(different))
    th = [allv[0] - 1] + [(a + b) / 2 for a, b in zip(allv, allv[1:])] + [allv[-1] + 1]
    pts = []
    for t in th:
        frr = sum(s < t for s in same) / len(same)
        far = sum(d >= t for d in different) / len(different)
        pts.append((far, frr))
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        g0, g1 = y0 - x0, y1 - x1
        if g0 <= 0 <= g1 and g1 != g0:
            a = -g0 / (g1 - g0)
            return 100 * (x0 + a * (x1 - x0))
        if g0 == 0:
            return 100 * x0
    raise AssertionError("no crossing")


# EER


def test_eer_perfect_separation():
    assert equal_error_rate(ScoreSet.from_lists([2, 3], [0, 1])) == 0.0


def test_eer_identical_multisets(rng):
    v = rng.normal(size=25)
    assert equal_error_rate(ScoreSet.from_lists(v, v)) == pytest.approx(50.0, abs=1e-12)
    assert equal_error_rate(ScoreSet.from_lists([1, 2], [1, 2])) == 50.0


def test_eer_small_fixture_matches_sweep_oracle():
    expected = oracle_eer([1, 3], [0, 2])
    assert expected == pytest.approx(50.0)
    assert equal_error_rate(ScoreSet.from_lists([1, 3], [0, 2])) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_eer_matches_oracle_random(seed):
    rng = np.random.default_rng(seed)
    same = np.round(rng.normal(1.0, 1.0, size=rng.integers(3, 15)), 1)
    diff = np.round(rng.normal(0.0, 1.0, size=rng.integers(3, 40)), 1)
    assert equal_error_rate(ScoreSet.from_lists(same, diff)) == pytest.approx(
        oracle_eer(list(same), list(diff)), abs=1e-9)


def test_eer_monotone_invariance(rng):
    same = rng.normal(1.0, 1.0, 30)
    diff = rng.normal(0.0, 1.0, 300)
    base = equal_error_rate(ScoreSet.from_lists(same, diff))
    for f in (np.exp, np.tanh, lambda x: x ** 3, lambda x: 5 * x - 2):
        assert equal_error_rate(ScoreSet.from_lists(f(same), f(diff))) == pytest.approx(base, abs=1e-12)


def test_eer_single_label_error():
    with pytest.raises(ValueError):
        equal_error_rate(ScoreSet.from_lists([1.0, 2.0], []))


# Cllr


@pytest.mark.parametrize("n_same, n_diff", [(3, 7), (7, 29), (40, 1560)])
def test_cllr_neutral_is_exactly_one(n_same, n_diff):
    assert cllr(np.zeros(n_same + n_diff), [True] * n_same + [False] * n_diff) == 1.0


def test_cllr_strong_system():
    assert cllr([6.0] * 5 + [-6.0] * 5, [True] * 5 + [False] * 5) < 1e-5


def test_cllr_hand_value():
    v = cllr([1.0, -1.0], [True, False])
    assert v == pytest.approx(math.log2(1.1), abs=1e-12)
    assert v == pytest.approx(0.13750, abs=1e-5)


def test_cllr_clamps_infinities():
    v = cllr([np.inf, -np.inf, 400.0], [True, False, False])
    assert math.isfinite(v)


# calibration


def test_calibration_uninformative_scores():
    vals = np.arange(1.0, 11.0)
    ss = ScoreSet.from_lists(vals, np.tile(vals, 30))
    model = fit_calibration(ss)
    assert model.weight == pytest.approx(0.0, abs=0.05)
    assert np.all(np.abs(model.log10_lr(ss.scores)) < 0.05)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=20),
       st.lists(st.floats(-5, 5), min_size=2, max_size=40))
@settings(max_examples=40, deadline=None)
def test_calibration_preserves_order(same, diff):
    ss = ScoreSet.from_lists(same, diff)
    if np.all(ss.scores == ss.scores[0]):
        return
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CalibrationWarning)
        model = fit_calibration(ss)
    assert model.weight >= 0
    order = np.argsort(ss.scores, kind="stable")
    cal = model.log10_lr(ss.scores)[order]
    assert np.all(np.diff(cal) >= -1e-12)


def test_calibration_tiny_spread_is_finite():
    model = fit_calibration(ScoreSet.from_lists([0.0, 0.0], [0.0, 1.2e-232]))
    assert math.isfinite(model.weight) and math.isfinite(model.offset)


def test_calibration_perfect_separation_fallback():
    ss = ScoreSet.from_lists([2, 3], [0, 1])
    model = fit_calibration(ss)
    assert model.separated
    llr = model.log10_lr(ss.scores)
    assert np.max(np.abs(llr)) <= 6.0 + 1e-9
    assert cllr(llr, ss.is_same) < 0.1


def test_calibration_inverted_scores_warns(rng):
    ss = ScoreSet.from_lists(rng.normal(-2, 1, 20), rng.normal(0, 1, 200))
    with pytest.warns(CalibrationWarning):
        model = fit_calibration(ss)
    assert model.weight == 0.0


def test_calibration_errors():
    with pytest.raises(ValueError):
        fit_calibration(ScoreSet.from_lists([1.0], []))
    with pytest.raises(ValueError):
        fit_calibration(ScoreSet.from_lists([1.0, 1.0], [1.0]))


def test_calibration_beats_grid_search(rng):
    same = rng.normal(1.5, 1.0, 40)
    diff = rng.normal(0.0, 1.2, 400)
    ss = ScoreSet.from_lists(same, diff)
    fitted = cllr(fit_calibration(ss).log10_lr(ss.scores), ss.is_same)
    best = np.inf
    for a in np.linspace(0.0, 3.0, 121):
        for b in np.linspace(-3.0, 3.0, 121):
            best = min(best, cllr((a * ss.scores + b) / math.log(10), ss.is_same))
    assert fitted <= best + 1e-3


def test_system_metrics_counts(rng):
    m = system_metrics(rng.normal(size=12), [True] * 3 + [False] * 9)
    assert (m.n_same, m.n_different) == (3, 9)
    assert set(m.to_json_dict()) == {"eer_percent", "cllr", "n_same", "n_different"}


# Tippett


def test_tippett_single_point():
    curves = tippett_data([0.0], [True])
    x, p = curves["same"]
    assert list(zip(x, p)) == [(0.0, 1.0)]


def test_tippett_two_points():
    x, p = tippett_data([-1.0, 1.0], [False, False])["different"]
    assert list(x) == [-1.0, 1.0]
    assert list(p) == [0.5, 1.0]


def test_tippett_large(rng):
    llr = rng.normal(size=1600)
    lab = np.zeros(1600, bool)
    lab[:40] = True
    for name, n in (("same", 40), ("different", 1560)):
        x, p = tippett_data(llr, lab)[name]
        assert np.all(np.diff(x) >= 0) and np.all(np.diff(p) > 0)
        assert p[0] == pytest.approx(1 / n) and p[-1] == 1.0
