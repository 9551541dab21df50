"""Pure numpy implementations of the hot kernels.

Mirrors the API of the compiled ``_ckernels`` module exactly; selected by
``shapelr._kernels`` when the extension is unavailable.
"""
import math

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

LOG_2PI = math.log(2.0 * math.pi)
LN10 = math.log(10.0)


def rotate_to_reference(configs, reference):
    """Rotate every centred (k, 2) configuration onto `reference`.

    Returns ``(aligned, rotations)`` with ``aligned[i] = configs[i] @ rotations[i]``;
    every rotation is proper (determinant +1).
    """
    X = np.ascontiguousarray(configs, dtype=float)
    M = np.einsum("nki,kj->nij", X, np.asarray(reference, dtype=float))
    U, _, Vt = np.linalg.svd(M)
    flip = np.linalg.det(U @ Vt) < 0
    U[flip, :, -1] *= -1.0
    R = U @ Vt
    return X @ R, R


def _chol(cov, name):
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} is not positive definite") from None
    return L, 2.0 * float(np.sum(np.log(np.diag(L))))


def _normal_logpdf(diff, L, logdet):
    z = solve_triangular(L, diff, lower=True)
    return -0.5 * (L.shape[0] * LOG_2PI + logdet + float(z @ z))


def _mixture_logpdf(y, means, L, logdet):
    z = solve_triangular(L, (y - means).T, lower=True)
    q = np.einsum("ij,ij->j", z, z)
    p = L.shape[0]
    return float(logsumexp(-0.5 * q)) - math.log(means.shape[0]) - 0.5 * (p * LOG_2PI + logdet)


def mixture_logpdf(y, means, cov):
    """log of (1/m) sum_i N(y; means[i], cov)."""
    y = np.asarray(y, dtype=float)
    means = np.atleast_2d(np.asarray(means, dtype=float))
    L, ld = _chol(np.asarray(cov, dtype=float), "covariance")
    return _mixture_logpdf(y, means, L, ld)


def mvkd_log10_lr(ya, na, yb, nb, U, H, means):
    """log10 LR for two sample means under the kernel-density two-level model."""
    ya = np.asarray(ya, dtype=float)
    yb = np.asarray(yb, dtype=float)
    DA = U / na
    DB = U / nb
    L, ld = _chol(DA + DB, "D_A + D_B")
    log_sim = _normal_logpdf(ya - yb, L, ld)
    # (D_A^-1 + D_B^-1)^-1 and the matching precision-weighted mean
    nab = na + nb
    mu = (na * ya + nb * yb) / nab
    L, ld = _chol(U / nab + H, "D_AB + H")
    log_typ = _mixture_logpdf(mu, means, L, ld)
    L, ld = _chol(DA + H, "D_A + H")
    log_a = _mixture_logpdf(ya, means, L, ld)
    L, ld = _chol(DB + H, "D_B + H")
    log_b = _mixture_logpdf(yb, means, L, ld)
    return ((log_sim + log_typ) - (log_a + log_b)) / LN10


def mvkd_log10_lr_batch(YA, NA, YB, NB, U, H, means):
    """Score many comparisons that share one reference population."""
    YA = np.atleast_2d(np.asarray(YA, dtype=float))
    YB = np.atleast_2d(np.asarray(YB, dtype=float))
    means = np.atleast_2d(np.asarray(means, dtype=float))
    U = np.asarray(U, dtype=float)
    H = np.asarray(H, dtype=float)
    return np.array(
        [
            mvkd_log10_lr(YA[i], float(NA[i]), YB[i], float(NB[i]), U, H, means)
            for i in range(YA.shape[0])
        ]
    )
