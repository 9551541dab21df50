"""Multivariate kernel-density likelihood ratios for two-level feature data.

Within-source variation is normal with pooled covariance ``U``; between-source
variation is a Gaussian kernel mixture centred on the reference speakers' means
with kernel covariance ``h**2 * B``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels

COND_LIMIT = 1e12
RIDGE = 1e-8


class CovarianceError(ValueError):
    pass


def kernel_bandwidth(m: int, p: int) -> float:
    """Optimal normal-reference bandwidth ``(4 / (m (2p + 1)))**(1 / (p + 4))``."""
    return (4.0 / (m * (2 * p + 1))) ** (1.0 / (p + 4))


@dataclass(frozen=True)
class ReferencePopulation:
    means: np.ndarray  # (m, p)
    counts: np.ndarray  # (m,)
    pooled_within: np.ndarray  # U, (p, p)
    between: np.ndarray  # B, (p, p)
    bandwidth: float
    labels: tuple = ()
    regularized: bool = False

    @property
    def m(self):
        return self.means.shape[0]

    @property
    def p(self):
        return self.means.shape[1]

    @property
    def kernel_cov(self):
        return self.bandwidth ** 2 * self.between

    def to_json(self) -> str:
        return json.dumps(
            {
                "U": self.pooled_within.tolist(),
                "B": self.between.tolist(),
                "h": self.bandwidth,
                "m": self.m,
                "labels": list(self.labels),
                "regularized": self.regularized,
            },
            indent=2,
        )


@dataclass(frozen=True)
class ComparisonSample:
    vectors: np.ndarray  # (n, p)

    @classmethod
    def of(cls, vectors):
        v = np.atleast_2d(np.asarray(vectors, dtype=float))
        if v.shape[0] < 1:
            raise ValueError("comparison sample needs at least one vector")
        return cls(v)

    @property
    def mean(self):
        return self.vectors.mean(axis=0)

    @property
    def count(self):
        return self.vectors.shape[0]


def _regularize(U):
    p = U.shape[0]
    try:
        cond = np.linalg.cond(U)
    except np.linalg.LinAlgError:
        cond = np.inf
    if np.isfinite(cond) and cond <= COND_LIMIT:
        return U, False
    ridge = RIDGE * np.trace(U) / p
    U = U + ridge * np.eye(p)
    if ridge <= 0 or np.linalg.cond(U) > 1.0 / np.finfo(float).eps:
        raise CovarianceError("pooled within-source covariance U is singular")
    return U, True


def estimate_population(groups, labels=None, subtract_within: bool = False) -> ReferencePopulation:
    """Estimate within/between covariances and bandwidth from per-speaker vectors.

    Parameters
    ----------
    groups : sequence of (n_i, p) arrays
        At least three sources with at least two vectors each.
    subtract_within : bool
        Use ``B - U / mean(n_i)`` (clipped to positive semi-definite) instead of
        the raw covariance of the source means.
    """
    arrays = [np.atleast_2d(np.asarray(g, dtype=float)) for g in groups]
    m = len(arrays)
    if m < 3:
        raise ValueError(f"reference population needs >= 3 sources, got {m}")
    p = arrays[0].shape[1]
    for i, a in enumerate(arrays):
        if a.shape[1] != p:
            raise ValueError(f"source {i} has dimension {a.shape[1]}, expected {p}")
        if a.shape[0] < 2:
            raise ValueError(f"source {i} has {a.shape[0]} vector(s); need >= 2")
    counts = np.array([a.shape[0] for a in arrays])
    means = np.stack([a.mean(axis=0) for a in arrays])
    N = counts.sum()
    S = np.zeros((p, p))
    for a, mu in zip(arrays, means):
        d = a - mu
        S += d.T @ d
    U = S / (N - m)
    dm = means - means.mean(axis=0)
    B = dm.T @ dm / (m - 1)
    if subtract_within:
        B = B - U / counts.mean()
        w, V = np.linalg.eigh(B)
        B = (V * np.clip(w, 0.0, None)) @ V.T
    U, reg = _regularize(U)
    return ReferencePopulation(
        means=means,
        counts=counts,
        pooled_within=U,
        between=B,
        bandwidth=kernel_bandwidth(m, p),
        labels=tuple(labels) if labels is not None else (),
        regularized=reg,
    )


def mvkd_log10_lr(a, b, pop: ReferencePopulation) -> float:
    """log10 likelihood ratio that samples `a` and `b` share a source.

    Densities are evaluated through Cholesky factors in log space, so the
    result stays finite where the raw densities would underflow.
    """
    a = a if isinstance(a, ComparisonSample) else ComparisonSample.of(a)
    b = b if isinstance(b, ComparisonSample) else ComparisonSample.of(b)
    if a.vectors.shape[1] != pop.p or b.vectors.shape[1] != pop.p:
        raise ValueError("sample dimension does not match the population")
    try:
        return float(
            _kernels.mvkd_log10_lr(a.mean, float(a.count), b.mean, float(b.count),
                                   pop.pooled_within, pop.kernel_cov, pop.means)
        )
    except ValueError as exc:
        raise CovarianceError(str(exc)) from None


def mvkd_log10_lr_many(ya, na, yb, nb, pop: ReferencePopulation) -> np.ndarray:
    """Vectorised scoring of sample means/counts against one population."""
    try:
        return _kernels.mvkd_log10_lr_batch(
            np.atleast_2d(ya), np.asarray(na, dtype=float), np.atleast_2d(yb),
            np.asarray(nb, dtype=float), pop.pooled_within, pop.kernel_cov, pop.means,
        )
    except ValueError as exc:
        raise CovarianceError(str(exc)) from None
