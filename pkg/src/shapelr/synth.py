"""Seeded hierarchical generator of synthetic landmark datasets.

Each speaker draws an effect vector from ``N(0, between_cov)``; each trial adds
``N(0, within_cov)``. The resulting p-vector weights p orthonormal landmark
displacement modes applied to a base shape. Trials are then re-embedded with a
random rotation and translation (and optionally scale) so alignment has real
work to do.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import SpeakerDataset, TrialRecord


class SyntheticSpecError(ValueError):
    pass


def default_base_shape(k: int = 11) -> np.ndarray:
    """A tongue-like arc in mm running from the root (left) to the tip.

    Deliberately asymmetric so that the largest centred coordinate is unique
    and positive, which fixes the sign of a pure dilation component.
    """
    theta = np.linspace(np.pi, 0.1 * np.pi, k)
    return np.column_stack([35.0 * np.cos(theta), 25.0 * np.sin(theta)])


def displacement_modes(base, p: int, size_mode: bool = True) -> np.ndarray:
    """Orthonormal (p, 2k) landmark displacement modes for `base`.

    Every mode is orthogonal to translation and infinitesimal rotation of the
    base. With `size_mode` the first mode is pure dilation; the rest are smooth
    bends along the contour normal, orthogonal to dilation as well.
    """
    base = np.asarray(base, dtype=float)
    k = base.shape[0]
    c = base - base.mean(axis=0)
    tx = np.tile([1.0, 0.0], k)
    ty = np.tile([0.0, 1.0], k)
    rot = np.column_stack([-c[:, 1], c[:, 0]]).ravel()
    dil = c.ravel()
    tangent = np.gradient(c, axis=0)
    normal = np.column_stack([-tangent[:, 1], tangent[:, 0]])
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    t = np.linspace(0.0, 1.0, k)
    bends = [(np.sin((r + 1) * np.pi * t)[:, None] * normal).ravel() for r in range(2 * k)]
    cols = [tx, ty, rot, dil] + bends
    Q, R = np.linalg.qr(np.column_stack(cols))
    keep = np.abs(np.diag(R)) > 1e-10 * np.abs(R).max()
    Q = Q[:, keep]
    fixed = 3  # translation x/y and rotation
    if size_mode:
        modes = Q[:, fixed : fixed + p]
    else:
        modes = Q[:, fixed + 1 : fixed + 1 + p]
    if modes.shape[1] < p:
        raise SyntheticSpecError(f"cannot build {p} displacement modes from {k} landmarks")
    # fix orientation: dilation outward, bends with positive leading loading
    for j in range(modes.shape[1]):
        lead = int(np.argmax(np.abs(modes[:, j])))
        if modes[lead, j] < 0:
            modes[:, j] = -modes[:, j]
    if size_mode and modes[:, 0] @ dil < 0:
        modes[:, 0] = -modes[:, 0]
    return modes.T.copy()


@dataclass
class SyntheticSpec:
    between_cov: np.ndarray
    within_cov: np.ndarray
    k: int = 11
    m: int = 20
    n: int = 20
    seed: int = 0
    size_mode: bool = True
    base_shape: np.ndarray | None = None
    landmark_noise: float = 0.05
    rotation_sd: float = 0.2
    translation_sd: float = 5.0
    scale_sd: float = 0.0
    n_vowels: int = 5
    vowel_sd: float = 0.0
    directions: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.between_cov = np.atleast_2d(np.asarray(self.between_cov, dtype=float))
        self.within_cov = np.atleast_2d(np.asarray(self.within_cov, dtype=float))
        for name in ("between_cov", "within_cov"):
            _check_cov(name, getattr(self, name))
        if self.between_cov.shape != self.within_cov.shape:
            raise SyntheticSpecError("between_cov and within_cov differ in shape")
        if self.m < 4 or self.n < 4:
            raise SyntheticSpecError("need m >= 4 speakers and n >= 4 trials per speaker")
        if self.k < 3:
            raise SyntheticSpecError("need k >= 3 landmarks")
        if self.base_shape is not None:
            self.base_shape = np.asarray(self.base_shape, dtype=float)
            if self.base_shape.shape != (self.k, 2):
                raise SyntheticSpecError(f"base_shape must be ({self.k}, 2)")

    @property
    def p(self):
        return self.between_cov.shape[0]


def _check_cov(name, C):
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise SyntheticSpecError(f"{name} must be square")
    if not np.all(np.isfinite(C)):
        raise SyntheticSpecError(f"{name} has non-finite entries")
    if not np.allclose(C, C.T, rtol=0.0, atol=1e-12):
        raise SyntheticSpecError(f"{name} is not symmetric")
    w = np.linalg.eigvalsh(C)
    if w.min() < -1e-10 * max(1.0, abs(w).max()):
        raise SyntheticSpecError(f"{name} is not positive semi-definite")


def _factor(C):
    w, V = np.linalg.eigh(C)
    return V * np.sqrt(np.clip(w, 0.0, None))


def _rot(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, s], [-s, c]])


def generate_synthetic(spec: SyntheticSpec) -> SpeakerDataset:
    """Draw a deterministic synthetic dataset for `spec`."""
    rng = np.random.default_rng(spec.seed)
    base = default_base_shape(spec.k) if spec.base_shape is None else spec.base_shape
    base = base - base.mean(axis=0)
    dirs = spec.directions
    if dirs is None:
        dirs = displacement_modes(base, spec.p, spec.size_mode)
    dirs = np.asarray(dirs, dtype=float)
    if dirs.shape != (spec.p, 2 * spec.k):
        raise SyntheticSpecError(f"directions must be ({spec.p}, {2 * spec.k})")
    Fb = _factor(spec.between_cov)
    Fw = _factor(spec.within_cov)
    vowel_effects = spec.vowel_sd * rng.standard_normal((spec.n_vowels, spec.p))
    trials = []
    for i in range(spec.m):
        spk = f"S{i + 1:02d}"
        effect = Fb @ rng.standard_normal(spec.p)
        for j in range(spec.n):
            v = j % spec.n_vowels
            rep = j // spec.n_vowels + 1
            w = effect + vowel_effects[v] + Fw @ rng.standard_normal(spec.p)
            shape = base + (w @ dirs).reshape(spec.k, 2)
            shape = shape + spec.landmark_noise * rng.standard_normal((spec.k, 2))
            angle = spec.rotation_sd * rng.standard_normal()
            shift = spec.translation_sd * rng.standard_normal(2)
            scale = np.exp(spec.scale_sd * rng.standard_normal()) if spec.scale_sd else 1.0
            cfg = scale * shape @ _rot(angle) + shift
            trials.append(TrialRecord(f"{spk}_t{j + 1:03d}", spk, f"V{v + 1}", rep, rep, cfg))
    return SpeakerDataset(trials, spec.k, {"source": "synthetic", "seed": spec.seed})
