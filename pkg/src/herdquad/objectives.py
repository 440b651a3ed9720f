"""Scalar criteria: MMD of weighted sample sets and the BQ posterior variance.

For a weighted set ``q = sum_n w_n delta(x_n)``,

    MMD^2(p, q) = E_pp[k] - 2 sum_n w_n z(x_n) + sum_nm w_n w_m k(x_n, x_m)

and with the BQ weights ``w = K^{-1} z`` this equals the posterior variance
``E_pp[k] - z^T K^{-1} z``. The two are computed along separate code paths
here so that their agreement is a meaningful check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import InputError, NotPositiveDefinite, NumericalError
from .gmm import GaussianMixture
from .kernel import RbfKernel
from .linalg import DEFAULT_JITTER, CholFactor

NEGATIVE_TOLERANCE = 1e-12


def _clamp(value: float, what: str) -> float:
    if value < -NEGATIVE_TOLERANCE:
        raise NumericalError(f"{what} evaluated to {value:.3e} < 0")
    return max(value, 0.0)


@dataclass(frozen=True)
class WeightedSampleSet:
    """Ordered points ``(N, d)`` with real weights ``(N,)``.

    Weights may be negative and need not sum to one.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if pts.size else pts.reshape(0, 1)
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.ndim != 2 or pts.shape[0] != w.shape[0]:
            raise InputError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if not np.all(np.isfinite(w)):
            raise InputError("weights must be finite")
        if not np.all(np.isfinite(pts)):
            raise InputError("points must be finite")
        if pts.shape[0] > 1 and np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise InputError("sample points must be pairwise distinct")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def uniform(cls, points) -> "WeightedSampleSet":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = pts.shape[0]
        return cls(pts, np.full(n, 1.0 / n))


def mmd_squared(p: GaussianMixture, k: RbfKernel, s: WeightedSampleSet) -> float:
    """Squared MMD between ``p`` and the weighted point measure ``s``."""
    iv = k.initial_variance(p)
    if len(s) == 0:
        return iv
    if s.points.shape[1] != p.dim:
        raise InputError("sample dimension does not match the target")
    w = s.weights
    z = np.atleast_1d(k.mean_embedding(p, s.points))
    K = k.gram(s.points)
    return _clamp(iv - 2.0 * float(w @ z) + float(w @ K @ w), "MMD^2")


def herding_objective(p: GaussianMixture, k: RbfKernel, points) -> float:
    """Uniform-weight squared MMD, the quantity kernel herding minimizes."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 1:
        raise InputError("herding objective needs at least one point")
    return mmd_squared(p, k, WeightedSampleSet.uniform(pts))


@dataclass(frozen=True)
class QuadratureState:
    """Everything needed for BQ on a fixed set of points.

    Holds the Cholesky factor of the jittered Gram matrix and the mean
    embeddings ``z``. The posterior variance depends on locations only;
    no function values are ever involved.
    """

    gmm: GaussianMixture
    kernel: RbfKernel
    points: np.ndarray
    chol: CholFactor
    z: np.ndarray
    initial_variance: float
    _kinv_z: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self._kinv_z is None:
            object.__setattr__(self, "_kinv_z", linalg.solve(self.chol, self.z))

    @classmethod
    def empty(cls, gmm: GaussianMixture, kernel: RbfKernel, jitter: float = DEFAULT_JITTER) -> "QuadratureState":
        return cls(gmm, kernel, np.zeros((0, gmm.dim)), CholFactor.empty(jitter), np.zeros(0), kernel.initial_variance(gmm))

    @classmethod
    def from_points(cls, gmm, kernel, points, jitter: float = DEFAULT_JITTER) -> "QuadratureState":
        """One-shot factorization of the Gram matrix on ``points``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[0] == 0:
            return cls.empty(gmm, kernel, jitter)
        chol = linalg.factor(kernel.gram(pts), jitter)
        z = np.atleast_1d(kernel.mean_embedding(gmm, pts))
        return cls(gmm, kernel, pts, chol, z, kernel.initial_variance(gmm))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def jitter(self) -> float:
        return self.chol.jitter

    def append(self, x) -> "QuadratureState":
        """State with ``x`` added; O(n^2) via :func:`herdquad.linalg.append`."""
        x = np.asarray(x, dtype=float).ravel()
        col = self.kernel.column(self.points, x) if self.n else np.zeros(0)
        chol = linalg.append(self.chol, col, 1.0 + self.jitter)
        z = np.append(self.z, self.kernel.mean_embedding(self.gmm, x))
        return QuadratureState(self.gmm, self.kernel, np.vstack([self.points, x]), chol, z, self.initial_variance)

    @property
    def variance(self) -> float:
        return bq_variance(self)

    @property
    def sample_set(self) -> WeightedSampleSet:
        return WeightedSampleSet(self.points, bq_weights(self))


def bq_weights(state: QuadratureState) -> np.ndarray:
    """Optimal quadrature weights ``(K + jitter I)^{-1} z``."""
    return state._kinv_z.copy()


def bq_variance(state: QuadratureState) -> float:
    """Posterior variance of the integral, ``E_pp[k] - z^T (K + jitter I)^{-1} z``."""
    return _clamp(state.initial_variance - float(state.z @ state._kinv_z), "BQ variance")


def variance_reduction(state: QuadratureState, candidate) -> float:
    """Drop in BQ variance from adding ``candidate``, by Schur complement.

    ``(z(c) - k_c^T K^{-1} z)^2 / (k(c, c) + jitter - k_c^T K^{-1} k_c)``
    """
    c = np.asarray(candidate, dtype=float).ravel()
    if c.shape[0] != state.gmm.dim:
        raise InputError("candidate dimension does not match the target")
    if state.n:
        dmin = float(np.min(np.linalg.norm(state.points - c, axis=1)))
        if dmin <= 1e-12:
            raise InputError(f"candidate is within {dmin:.1e} of an existing point")
    zc = float(state.kernel.mean_embedding(state.gmm, c))
    if state.n == 0:
        return zc * zc / (1.0 + state.jitter)
    kc = state.kernel.column(state.points, c)
    v = state.chol.forward(kc)
    a = state.chol.forward(state.z)
    denom = 1.0 + state.jitter - float(v @ v)
    if not denom > 0:
        raise NotPositiveDefinite(f"Schur complement {denom:.3e} is not positive")
    num = zc - float(v @ a)
    return num * num / denom


def incoherency(pool, k: RbfKernel, chunk: int = 2048) -> float:
    """Largest normalized kernel value between two distinct pool elements."""
    pts = np.atleast_2d(np.asarray(pool, dtype=float))
    P = pts.shape[0]
    if P < 2:
        raise InputError("incoherency needs at least two points")
    best = -np.inf
    for start in range(0, P, chunk):
        block = k.gram(pts[start:start + chunk], pts)
        rows = np.arange(block.shape[0])
        block[rows, start + rows] = -np.inf
        best = max(best, float(block.max()))
    return best
