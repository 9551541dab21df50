"""Generalised Procrustes alignment, tangent projection and PCA of landmark shapes."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels

SIZE_AND_SHAPE = "size_and_shape"
SHAPE_ONLY = "shape_only"
MODES = (SIZE_AND_SHAPE, SHAPE_ONLY)

GPA_TOL = 1e-10
GPA_MAX_ITER = 200
RANK_TOL = 1e-10


class DegenerateConfigurationError(ValueError):
    pass


class RankError(ValueError):
    def __init__(self, q, rank):
        super().__init__(f"requested {q} components but the data have effective rank {rank}")
        self.q = q
        self.rank = rank


class ConvergenceWarning(UserWarning):
    pass


def _check_mode(mode):
    mode = mode.replace("-", "_")
    if mode == "shape":
        mode = SHAPE_ONLY
    if mode not in MODES:
        raise ValueError(f"unknown alignment mode {mode!r}")
    return mode


def centroid_size(config) -> float:
    """Square root of the summed squared landmark distances to the centroid."""
    X = np.asarray(config, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DegenerateConfigurationError("need at least two landmarks")
    s = float(np.sqrt(np.sum((X - X.mean(axis=0)) ** 2)))
    if s == 0.0:
        raise DegenerateConfigurationError("all landmarks coincide")
    return s


def procrustes_distance(a, b, scale: bool = False) -> float:
    """Residual norm after optimally translating and rotating `a` onto `b`.

    With ``scale=True`` both are first normalised to unit centroid size.
    """
    A = np.asarray(a, dtype=float)
    B = np.asarray(b, dtype=float)
    A = A - A.mean(axis=0)
    B = B - B.mean(axis=0)
    if scale:
        A = A / centroid_size(A)
        B = B / centroid_size(B)
    fitted, _ = _kernels.rotate_to_reference(A[None], B)
    return float(np.linalg.norm(fitted[0] - B))


@dataclass
class AlignedShapeSet:
    mode: str
    aligned: np.ndarray  # (n, k, 2)
    mean_shape: np.ndarray  # (k, 2)
    centroid_sizes: np.ndarray  # (n,), pre-scaling
    iterations: int
    converged: bool
    rotations: np.ndarray = field(repr=False, default=None)  # (n, 2, 2)
    objective: list = field(repr=False, default_factory=list)

    def __len__(self):
        return self.aligned.shape[0]


def procrustes_align(configs, mode: str = SIZE_AND_SHAPE, tol: float = GPA_TOL,
                     max_iter: int = GPA_MAX_ITER) -> AlignedShapeSet:
    """Generalised Procrustes analysis of 2-D landmark configurations.

    All configurations are centred; in ``shape_only`` mode each is also scaled
    to unit centroid size once, up front, and scale stays fixed afterwards. The
    first configuration seeds the reference. Each iteration rotates every
    configuration onto the current mean and recomputes the mean, stopping when
    the Frobenius change of the mean drops below `tol`.

    ``objective`` records the summed squared distance to the mean after each
    iteration; it is non-increasing.
    """
    mode = _check_mode(mode)
    X = np.array(configs, dtype=float)
    if X.ndim != 3 or X.shape[2] != 2:
        raise ValueError("configs must have shape (n, k, 2)")
    if X.shape[0] < 2:
        raise ValueError("need at least two configurations")
    X = X - X.mean(axis=1, keepdims=True)
    sizes = np.sqrt(np.einsum("nkd,nkd->n", X, X))
    if np.any(sizes == 0.0):
        bad = int(np.flatnonzero(sizes == 0.0)[0])
        raise DegenerateConfigurationError(f"configuration {bad} has all landmarks coincident")
    if mode == SHAPE_ONLY:
        X = X / sizes[:, None, None]

    mean = X[0].copy()
    objective = []
    converged = False
    it = 0
    aligned, rots = X, None
    for it in range(1, max_iter + 1):
        aligned, rots = _kernels.rotate_to_reference(X, mean)
        new_mean = aligned.mean(axis=0)
        objective.append(float(np.sum((aligned - new_mean) ** 2)))
        change = float(np.linalg.norm(new_mean - mean))
        mean = new_mean
        if change < tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"GPA did not converge in {max_iter} iterations", ConvergenceWarning, stacklevel=2
        )
    return AlignedShapeSet(mode, aligned, mean, sizes, it, converged, rots, objective)


def tangent_coordinates(aligned: AlignedShapeSet) -> np.ndarray:
    """Per-trial tangent vectors of length 2k at the mean shape.

    Size-and-shape uses plain residuals from the mean; shape-only projects each
    aligned configuration onto the hyperplane orthogonal to the mean.
    """
    if not aligned.converged:
        warnings.warn("tangent projection of a non-converged alignment", ConvergenceWarning,
                      stacklevel=2)
    n = len(aligned)
    V = aligned.aligned.reshape(n, -1)
    mu = aligned.mean_shape.reshape(-1)
    if aligned.mode == SIZE_AND_SHAPE:
        return V - mu
    u = mu / np.linalg.norm(mu)
    return V - np.outer(V @ u, u)


@dataclass
class PCModel:
    mean_vector: np.ndarray  # (2k,) shape at which the tangent space is taken
    components: np.ndarray  # (2k, q), orthonormal columns
    variances: np.ndarray  # (q,)
    explained_ratio: np.ndarray  # (q,)
    scores: np.ndarray  # (n, q)
    center: np.ndarray  # (2k,) mean tangent vector
    all_variances: np.ndarray  # (2k,)
    rank: int

    @property
    def q(self):
        return self.components.shape[1]

    def project(self, tangent):
        return (np.atleast_2d(tangent) - self.center) @ self.components


def effective_rank(eigenvalues) -> int:
    ev = np.asarray(eigenvalues)
    top = ev.max() if ev.size else 0.0
    if top <= 0:
        return 0
    return int(np.sum(ev > RANK_TOL * top))


def fit_pca(tangent, q: int, mean_shape=None) -> PCModel:
    """Principal components of tangent vectors via the sample covariance.

    Components are oriented so their largest-magnitude loading is positive
    (first such index on ties). `mean_shape` is carried along for effect-shape
    reconstruction; without it the tangent mean is used.
    """
    T = np.asarray(tangent, dtype=float)
    n, dim = T.shape
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if n < 2:
        raise ValueError(f"need at least 2 observations, got {n}")
    center = T.mean(axis=0)
    C = np.cov(T, rowvar=False, ddof=1).reshape(dim, dim)
    evals, evecs = np.linalg.eigh(C)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    rank = effective_rank(evals)
    if q > rank:
        raise RankError(q, rank)
    comps = evecs[:, :q].copy()
    for j in range(q):
        lead = int(np.argmax(np.abs(comps[:, j])))
        if comps[lead, j] < 0:
            comps[:, j] = -comps[:, j]
    total = evals.sum()
    mean_vector = center if mean_shape is None else np.asarray(mean_shape, dtype=float).reshape(-1)
    return PCModel(
        mean_vector=mean_vector.copy(),
        components=comps,
        variances=evals[:q].copy(),
        explained_ratio=evals[:q] / total,
        scores=(T - center) @ comps,
        center=center,
        all_variances=evals,
        rank=rank,
    )


@dataclass(frozen=True)
class EffectShape:
    pc_index: int
    sd_multiple: float
    shape: np.ndarray


def effect_shapes(model: PCModel, pc: int, sd_multiples=(-3.0, 3.0)) -> list[EffectShape]:
    """Shapes at the mean plus multiples of one component's standard deviation."""
    if not 1 <= pc <= model.q:
        raise ValueError(f"pc must be in [1, {model.q}], got {pc}")
    comp = model.components[:, pc - 1]
    sd = np.sqrt(model.variances[pc - 1])
    out = []
    for c in sd_multiples:
        vec = model.mean_vector + (c * sd) * comp if c != 0 else model.mean_vector.copy()
        out.append(EffectShape(pc, float(c), vec.reshape(-1, 2)))
    return out


def pearson_correlation(x, y):
    """Sample Pearson r with a two-sided p from the t statistic on n - 2 df."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if y.size != n:
        raise ValueError("x and y differ in length")
    if n < 3:
        raise ValueError("need at least 3 observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("zero variance input")
    r = float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * np.sqrt((n - 2) / (1.0 - r * r))
    p = float(2.0 * stats.t.sf(abs(t), n - 2))
    return r, p
