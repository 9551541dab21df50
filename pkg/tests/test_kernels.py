"""Both kernel backends must agree with each other and with scipy."""
import numpy as np
import pytest
from scipy import stats
from scipy.special import logsumexp

from shapelr import _kernels, _pykernels


def test_backend_reported():
    assert _kernels.BACKEND in ("python", "cython")


def _rand_spd(rng, p):
    A = rng.normal(size=(p, p))
    return A @ A.T + 0.3 * np.eye(p)


def test_rotation_is_optimal_and_proper(kernels, rng):
    ref = rng.normal(size=(7, 2))
    ref -= ref.mean(axis=0)
    X = rng.normal(size=(12, 7, 2))
    X -= X.mean(axis=1, keepdims=True)
    aligned, R = kernels.rotate_to_reference(X, ref)
    np.testing.assert_allclose(np.linalg.det(R), 1.0, atol=1e-12)
    np.testing.assert_allclose(aligned, X @ R, atol=1e-12)
    for i in range(12):
        best = np.sum((aligned[i] - ref) ** 2)
        for th in np.linspace(-np.pi, np.pi, 721):
            c, s = np.cos(th), np.sin(th)
            assert best <= np.sum((X[i] @ np.array([[c, s], [-s, c]]) - ref) ** 2) + 1e-9


def test_rotation_backends_agree(rng):
    try:
        from shapelr import _ckernels
    except ImportError:
        pytest.skip("compiled kernels not built")
    ref = rng.normal(size=(11, 2))
    X = rng.normal(size=(50, 11, 2))
    a1, r1 = _pykernels.rotate_to_reference(X, ref)
    a2, r2 = _ckernels.rotate_to_reference(X, ref)
    np.testing.assert_allclose(a1, a2, atol=1e-12)
    np.testing.assert_allclose(r1, r2, atol=1e-12)


@pytest.mark.parametrize("p", [1, 2, 3, 5])
def test_mixture_logpdf_matches_scipy(kernels, rng, p):
    means = rng.normal(size=(6, p))
    cov = _rand_spd(rng, p)
    y = rng.normal(size=p)
    ref = logsumexp([stats.multivariate_normal.logpdf(y, m, cov) for m in means]) - np.log(6)
    assert kernels.mixture_logpdf(y, means, cov) == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_mvkd_backends_agree(rng, p):
    try:
        from shapelr import _ckernels
    except ImportError:
        pytest.skip("compiled kernels not built")
    U, H = _rand_spd(rng, p), _rand_spd(rng, p)
    means = rng.normal(0, 2, size=(9, p))
    YA, YB = rng.normal(0, 2, size=(2, 30, p))
    NA, NB = rng.integers(1, 10, size=(2, 30)).astype(float)
    v1 = _pykernels.mvkd_log10_lr_batch(YA, NA, YB, NB, U, H, means)
    v2 = _ckernels.mvkd_log10_lr_batch(YA, NA, YB, NB, U, H, means)
    np.testing.assert_allclose(v1, v2, rtol=1e-10, atol=1e-10)


def test_mvkd_swap_exact(kernels, rng):
    U, H = _rand_spd(rng, 3), _rand_spd(rng, 3)
    means = rng.normal(size=(5, 3))
    ya, yb = rng.normal(size=(2, 3))
    assert kernels.mvkd_log10_lr(ya, 3.0, yb, 7.0, U, H, means) == \
        kernels.mvkd_log10_lr(yb, 7.0, ya, 3.0, U, H, means)


@pytest.mark.parametrize("which, U, H", [
    ("D_A + D_B", -np.eye(2), np.eye(2)),
    ("D_AB + H", np.eye(2), -np.eye(2)),
])
def test_mvkd_error_names_matrix(kernels, which, U, H):
    with pytest.raises(ValueError, match=which.replace("+", r"\+")):
        kernels.mvkd_log10_lr(np.zeros(2), 2.0, np.zeros(2), 2.0, U, H, np.zeros((3, 2)))
