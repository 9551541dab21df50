# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; same API as ``shapelr._pykernels``."""
import numpy as np

from libc.math cimport sqrt, log, exp, atan2, cos, sin, isfinite, M_PI
from libc.stdlib cimport malloc, free

cdef double LOG_2PI = log(2.0 * M_PI)
cdef double LN10 = log(10.0)


def rotate_to_reference(configs, reference):
    """Rotate every centred (k, 2) configuration onto `reference`.

    In two dimensions the optimal proper rotation has a closed form: the angle
    is atan2 of the cross and dot sums between the configuration and the
    reference.
    """
    cdef double[:, :, ::1] X = np.ascontiguousarray(configs, dtype=np.float64)
    cdef double[:, ::1] Y = np.ascontiguousarray(reference, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0], k = X.shape[1], i, j
    out = np.empty((n, k, 2))
    rots = np.empty((n, 2, 2))
    cdef double[:, :, ::1] A = out
    cdef double[:, :, ::1] R = rots
    cdef double a, b, th, c, s
    with nogil:
        for i in range(n):
            a = 0.0
            b = 0.0
            for j in range(k):
                a = a + X[i, j, 0] * Y[j, 0] + X[i, j, 1] * Y[j, 1]
                b = b + X[i, j, 0] * Y[j, 1] - X[i, j, 1] * Y[j, 0]
            th = atan2(b, a)
            c = cos(th)
            s = sin(th)
            R[i, 0, 0] = c
            R[i, 0, 1] = s
            R[i, 1, 0] = -s
            R[i, 1, 1] = c
            for j in range(k):
                A[i, j, 0] = X[i, j, 0] * c - X[i, j, 1] * s
                A[i, j, 1] = X[i, j, 0] * s + X[i, j, 1] * c
    return out, rots


cdef int _chol(const double* A, double* L, int p, double* logdet) noexcept nogil:
    cdef int i, j, t
    cdef double s
    logdet[0] = 0.0
    for i in range(p):
        for j in range(i + 1):
            s = A[i * p + j]
            for t in range(j):
                s -= L[i * p + t] * L[j * p + t]
            if i == j:
                if not (s > 0.0) or not isfinite(s):
                    return -1
                L[i * p + i] = sqrt(s)
                logdet[0] += 2.0 * log(L[i * p + i])
            else:
                L[i * p + j] = s / L[j * p + j]
        for j in range(i + 1, p):
            L[i * p + j] = 0.0
    return 0


cdef double _quad(const double* L, const double* d, double* z, int p) noexcept nogil:
    cdef int i, t
    cdef double s, q = 0.0
    for i in range(p):
        s = d[i]
        for t in range(i):
            s -= L[i * p + t] * z[t]
        z[i] = s / L[i * p + i]
        q += z[i] * z[i]
    return q


cdef double _mixture(const double* y, const double* means, int m, const double* L,
                     double logdet, int p, double* d, double* z, double* q) noexcept nogil:
    cdef int r, i
    cdef double mx, acc
    for r in range(m):
        for i in range(p):
            d[i] = y[i] - means[r * p + i]
        q[r] = -0.5 * _quad(L, d, z, p)
    mx = q[0]
    for r in range(1, m):
        if q[r] > mx:
            mx = q[r]
    acc = 0.0
    for r in range(m):
        acc += exp(q[r] - mx)
    return mx + log(acc) - log(<double>m) - 0.5 * (p * LOG_2PI + logdet)


cdef int _score(const double* ya, double na, const double* yb, double nb,
                const double* U, const double* H, const double* means, int m, int p,
                double* S, double* L, double* d, double* z, double* q,
                double* mu, double* out) noexcept nogil:
    """Returns 0 on success, else 1..4 naming the failing composite covariance."""
    cdef int i, pp = p * p
    cdef double ld, log_sim, log_typ, log_a, log_b, nab = na + nb
    for i in range(pp):
        S[i] = U[i] / na + U[i] / nb
    if _chol(S, L, p, &ld):
        return 1
    for i in range(p):
        d[i] = ya[i] - yb[i]
    log_sim = -0.5 * (p * LOG_2PI + ld + _quad(L, d, z, p))
    for i in range(pp):
        S[i] = U[i] / nab + H[i]
    if _chol(S, L, p, &ld):
        return 2
    for i in range(p):
        mu[i] = (na * ya[i] + nb * yb[i]) / nab
    log_typ = _mixture(mu, means, m, L, ld, p, d, z, q)
    for i in range(pp):
        S[i] = U[i] / na + H[i]
    if _chol(S, L, p, &ld):
        return 3
    log_a = _mixture(ya, means, m, L, ld, p, d, z, q)
    for i in range(pp):
        S[i] = U[i] / nb + H[i]
    if _chol(S, L, p, &ld):
        return 4
    log_b = _mixture(yb, means, m, L, ld, p, d, z, q)
    out[0] = ((log_sim + log_typ) - (log_a + log_b)) / LN10
    return 0


_FAILED = {1: "D_A + D_B", 2: "D_AB + H", 3: "D_A + H", 4: "D_B + H"}


def mvkd_log10_lr_batch(YA, NA, YB, NB, U, H, means):
    """Score many comparisons that share one reference population."""
    cdef double[:, ::1] ya = np.ascontiguousarray(np.atleast_2d(YA), dtype=np.float64)
    cdef double[:, ::1] yb = np.ascontiguousarray(np.atleast_2d(YB), dtype=np.float64)
    cdef double[::1] na = np.ascontiguousarray(NA, dtype=np.float64).ravel()
    cdef double[::1] nb = np.ascontiguousarray(NB, dtype=np.float64).ravel()
    cdef double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef double[:, ::1] h = np.ascontiguousarray(H, dtype=np.float64)
    cdef double[:, ::1] mv = np.ascontiguousarray(np.atleast_2d(means), dtype=np.float64)
    cdef int n = ya.shape[0], p = ya.shape[1], m = mv.shape[0], i, err = 0
    if yb.shape[0] != n or na.shape[0] != n or nb.shape[0] != n:
        raise ValueError("batch arrays disagree in length")
    if yb.shape[1] != p or mv.shape[1] != p or u.shape[0] != p or h.shape[0] != p:
        raise ValueError("dimension mismatch")
    result = np.empty(n)
    cdef double[::1] res = result
    cdef double* work = <double*> malloc((2 * p * p + 3 * p + m) * sizeof(double))
    if work == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                err = _score(&ya[i, 0], na[i], &yb[i, 0], nb[i], &u[0, 0], &h[0, 0],
                             &mv[0, 0], m, p, work, work + p * p,
                             work + 2 * p * p, work + 2 * p * p + p,
                             work + 2 * p * p + 3 * p, work + 2 * p * p + 2 * p,
                             &res[i])
                if err:
                    break
    finally:
        free(work)
    if err:
        raise ValueError(f"{_FAILED[err]} is not positive definite")
    return result


def mvkd_log10_lr(ya, na, yb, nb, U, H, means):
    """log10 LR for two sample means under the kernel-density two-level model."""
    return float(mvkd_log10_lr_batch(np.atleast_2d(ya), [na], np.atleast_2d(yb), [nb],
                                     U, H, means)[0])


def mixture_logpdf(y, means, cov):
    """log of (1/m) sum_i N(y; means[i], cov)."""
    cdef double[::1] yy = np.ascontiguousarray(y, dtype=np.float64).ravel()
    cdef double[:, ::1] mv = np.ascontiguousarray(np.atleast_2d(means), dtype=np.float64)
    cdef double[:, ::1] c = np.ascontiguousarray(cov, dtype=np.float64)
    cdef int p = yy.shape[0], m = mv.shape[0]
    cdef double ld, out
    work = np.empty(p * p + 2 * p + m)
    cdef double[::1] w = work
    if _chol(&c[0, 0], &w[0], p, &ld):
        raise ValueError("covariance is not positive definite")
    out = _mixture(&yy[0], &mv[0, 0], m, &w[0], ld, p, &w[p * p], &w[p * p + p],
                   &w[p * p + 2 * p])
    return out
