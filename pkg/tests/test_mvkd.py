import math

import numpy as np
import pytest

from oracles import log10_lr_monte_carlo, log10_lr_quadrature, random_fixture
from shapelr.mvkd import (
    ComparisonSample,
    CovarianceError,
    ReferencePopulation,
    estimate_population,
    kernel_bandwidth,
    mvkd_log10_lr,
    mvkd_log10_lr_many,
)


def sample_with_mean(mean, n, spread=0.3):
    """n vectors whose mean is exactly `mean`."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    dev = spread * np.linspace(-1, 1, n)[:, None] * np.ones_like(mean)
    return ComparisonSample.of(mean + dev - dev.mean(axis=0))


def toy_population():
    """Reference means {-2, 0, 2}, U = 1, ten vectors per source."""
    means = np.array([[-2.0], [0.0], [2.0]])
    dm = means - means.mean(axis=0)
    return ReferencePopulation(
        means=means,
        counts=np.full(3, 10),
        pooled_within=np.eye(1),
        between=dm.T @ dm / 2,
        bandwidth=kernel_bandwidth(3, 1),
    )


def test_population_hand_example():
    pop = estimate_population([[[0], [2]], [[4], [6]], [[8], [10]]])
    assert pop.pooled_within[0, 0] == pytest.approx(2.0, abs=1e-12)
    assert pop.between[0, 0] == pytest.approx(16.0, abs=1e-12)
    np.testing.assert_allclose(pop.means.ravel(), [1, 5, 9])
    assert pop.bandwidth == pytest.approx(kernel_bandwidth(3, 1))


def test_bandwidth_formula():
    assert kernel_bandwidth(5, 1) == pytest.approx((4 / 15) ** 0.2, abs=1e-12)
    assert kernel_bandwidth(5, 1) == pytest.approx(0.76770, abs=1e-5)


def test_zero_within_scatter_is_an_error():
    groups = [np.ones((3, 2)) * c for c in (0.0, 1.0, 2.0)]
    with pytest.raises(CovarianceError):
        estimate_population(groups)


def test_ill_conditioned_within_is_regularized(rng):
    v = rng.normal(size=(20, 1))
    groups = [np.hstack([v[i * 5:(i + 1) * 5] + i, 2 * v[i * 5:(i + 1) * 5] + 2 * i]) for i in range(4)]
    pop = estimate_population(groups)
    assert pop.regularized
    assert np.all(np.linalg.eigvalsh(pop.pooled_within) > 0)


def test_population_preconditions():
    with pytest.raises(ValueError):
        estimate_population([[[0], [1]], [[2], [3]]])
    with pytest.raises(ValueError):
        estimate_population([[[0], [1]], [[2], [3]], [[4]]])


def test_subtract_within_variant_is_psd(rng):
    groups = [rng.normal(c, 1.0, size=(6, 2)) for c in (0.0, 0.1, 0.2, 0.3)]
    pop = estimate_population(groups, subtract_within=True)
    assert np.all(np.linalg.eigvalsh(pop.between) >= -1e-12)
    assert np.all(np.diag(pop.between) <= np.diag(estimate_population(groups).between) + 1e-12)


def test_swap_symmetry_exact(rng):
    groups, ya, na, yb, nb = random_fixture(rng, 2, 4)
    pop = estimate_population(groups)
    a = sample_with_mean(ya, na) if na > 1 else ComparisonSample.of(ya)
    b = sample_with_mean(yb, nb) if nb > 1 else ComparisonSample.of(yb)
    assert mvkd_log10_lr(a, b, pop) == mvkd_log10_lr(b, a, pop)


def test_toy_same_and_different_source():
    pop = toy_population()
    same = mvkd_log10_lr_many([[1.9]], [5], [[2.1]], [5], pop)[0]
    diff = mvkd_log10_lr_many([[-1.9]], [5], [[2.1]], [5], pop)[0]
    assert same > 0
    assert diff < 0
    for y1, y2, val in ((1.9, 2.1, same), (-1.9, 2.1, diff)):
        ref = log10_lr_quadrature(y1, 5, y2, 5, pop.pooled_within, pop.between, pop.bandwidth, pop.means)
        assert val == pytest.approx(ref, abs=0.02)


def test_sample_mean_and_count_drive_the_score():
    pop = toy_population()
    a = sample_with_mean([1.9], 5)
    b = sample_with_mean([2.1], 5)
    assert mvkd_log10_lr(a, b, pop) == pytest.approx(
        mvkd_log10_lr_many([[1.9]], [5], [[2.1]], [5], pop)[0], abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_quadrature_oracle_p1(seed):
    rng = np.random.default_rng(100 + seed)
    groups, ya, na, yb, nb = random_fixture(rng, 1, 3 + seed % 3)
    pop = estimate_population(groups)
    ours = mvkd_log10_lr_many([ya], [na], [yb], [nb], pop)[0]
    ref = log10_lr_quadrature(ya, na, yb, nb, pop.pooled_within, pop.between, pop.bandwidth, pop.means)
    assert ours == pytest.approx(ref, abs=0.02)


def test_monte_carlo_oracle_p2():
    rng = np.random.default_rng(7)
    groups, ya, na, yb, nb = random_fixture(rng, 2, 4)
    pop = estimate_population(groups)
    ours = mvkd_log10_lr_many([ya], [na], [yb], [nb], pop)[0]
    ref = log10_lr_monte_carlo(ya, na, yb, nb, pop.pooled_within, pop.between, pop.bandwidth,
                               pop.means, n_samples=2_000_000)
    assert ours == pytest.approx(ref, abs=0.02)


def test_underflow_regime_is_finite_and_correct():
    pop = toy_population()
    val = mvkd_log10_lr_many([[-50.0]], [5], [[50.0]], [5], pop)[0]
    assert math.isfinite(val)
    assert val < -1000
    ref = log10_lr_quadrature(-50.0, 5, 50.0, 5, pop.pooled_within, pop.between, pop.bandwidth,
                              pop.means)
    assert val == pytest.approx(ref, abs=0.02)


def test_affine_equivariance(rng):
    groups, ya, na, yb, nb = random_fixture(rng, 2, 5)
    A = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    c = rng.normal(size=2)
    pop = estimate_population(groups)
    pop2 = estimate_population([g @ A.T + c for g in groups])
    v1 = mvkd_log10_lr_many([ya], [na], [yb], [nb], pop)[0]
    v2 = mvkd_log10_lr_many([A @ ya + c], [na], [A @ yb + c], [nb], pop2)[0]
    assert v1 == pytest.approx(v2, abs=1e-6)


def test_monotone_typicality():
    pop = toy_population()
    ys = np.linspace(0.0, 12.0, 25)
    vals = mvkd_log10_lr_many(ys[:, None], np.full(25, 5), ys[:, None], np.full(25, 5), pop)
    assert np.all(np.diff(vals) > 0)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        mvkd_log10_lr([[1.0, 2.0]], [[1.0, 2.0]], toy_population())


def test_non_pd_composite_names_matrix():
    pop = toy_population()
    bad = ReferencePopulation(pop.means, pop.counts, -np.eye(1), pop.between, pop.bandwidth)
    with pytest.raises(CovarianceError, match=r"D_A \+ D_B"):
        mvkd_log10_lr_many([[0.0]], [2], [[0.0]], [2], bad)


def test_population_json_dump():
    import json

    doc = json.loads(toy_population().to_json())
    assert set(doc) >= {"U", "B", "h"}
