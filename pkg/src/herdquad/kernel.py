"""Isotropic RBF kernel and its closed-form integrals against a Gaussian mixture."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .gmm import GaussianMixture


def _pairwise_sqdist(x: np.ndarray, y: np.ndarray, same: bool = False) -> np.ndarray:
    # expanded |x|^2 + |y|^2 - 2 x.y; absolute error ~1e-16 |x|^2, harmless next to any jitter
    xx = np.einsum("ij,ij->i", x, x)
    yy = xx if same else np.einsum("ij,ij->i", y, y)
    d2 = xx[:, None] + yy[None, :] - 2.0 * (x @ y.T)
    np.maximum(d2, 0.0, out=d2)
    if same:
        d2 = 0.5 * (d2 + d2.T)
        np.fill_diagonal(d2, 0.0)
    return d2


def _gaussian_overlap(x: np.ndarray, means: np.ndarray, covs: np.ndarray, weights: np.ndarray, scale: float) -> np.ndarray:
    """``sum_j weights_j * scale * N(x; means_j, covs_j)`` for rows of ``x``."""
    d = x.shape[1]
    out = np.zeros(x.shape[0])
    for w, mu, cov in zip(weights, means, covs):
        L = np.linalg.cholesky(cov)
        sol = np.linalg.solve(L, (x - mu).T)
        maha = np.sum(sol * sol, axis=0)
        log_det_half = np.sum(np.log(np.diag(L)))
        log_coef = np.log(scale) - 0.5 * d * np.log(2.0 * np.pi) - log_det_half
        out += w * np.exp(log_coef - 0.5 * maha)
    return out


@dataclass(frozen=True)
class RbfKernel:
    """``k(x, y) = exp(-|x - y|^2 / (2 lengthscale^2))`` with unit amplitude.

    Besides pointwise evaluation the kernel knows how to integrate itself
    against a :class:`~herdquad.gmm.GaussianMixture`: once
    (:meth:`mean_embedding`) and twice (:meth:`initial_variance`).
    """

    lengthscale: float

    def __post_init__(self):
        ls = float(self.lengthscale)
        if not np.isfinite(ls) or ls <= 0:
            raise InputError(f"lengthscale must be positive, got {self.lengthscale!r}")
        object.__setattr__(self, "lengthscale", ls)

    def eval(self, x, y) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if x.shape != y.shape or x.ndim != 1:
            raise InputError(f"dimension mismatch: {x.shape} vs {y.shape}")
        diff = x - y
        return float(np.exp(-np.dot(diff, diff) / (2.0 * self.lengthscale**2)))

    __call__ = eval

    def gram(self, x, y=None) -> np.ndarray:
        """Kernel matrix between the rows of ``x`` and ``y`` (defaults to ``x``)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        same = y is None
        y = x if same else np.atleast_2d(np.asarray(y, dtype=float))
        if x.shape[1] != y.shape[1]:
            raise InputError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
        return np.exp(-_pairwise_sqdist(x, y, same) / (2.0 * self.lengthscale**2))

    def column(self, x, y) -> np.ndarray:
        """``k(x_i, y)`` for every row of ``x`` and a single point ``y``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if x.shape[1] != y.shape[0]:
            raise InputError(f"dimension mismatch: {x.shape[1]} vs {y.shape[0]}")
        diff = x - y
        return np.exp(-np.einsum("ij,ij->i", diff, diff) / (2.0 * self.lengthscale**2))

    def _conv_scale(self, d: int) -> float:
        # integral of the unnormalized RBF over R^d
        return (2.0 * np.pi * self.lengthscale**2) ** (d / 2.0)

    def mean_embedding(self, p: GaussianMixture, x) -> np.ndarray | float:
        """``z(x) = E_{x' ~ p}[k(x, x')]`` in closed form.

        Each component contributes ``(2 pi l^2)^{d/2} N(x; mu_j, Sigma_j + l^2 I)``.
        Accepts one point ``(d,)`` or a batch ``(M, d)``.
        """
        pts = np.asarray(x, dtype=float)
        single = pts.ndim <= 1
        pts = pts.reshape(1, -1) if single else pts
        if pts.shape[1] != p.dim:
            raise InputError(f"expected points of dimension {p.dim}, got {pts.shape[1]}")
        d = p.dim
        covs = p.covs + self.lengthscale**2 * np.eye(d)
        out = _gaussian_overlap(pts, p.means, covs, p.weights, self._conv_scale(d))
        return float(out[0]) if single else out

    def initial_variance(self, p: GaussianMixture) -> float:
        """``E_{x, x' ~ p}[k(x, x')]``, the MMD of an empty sample set."""
        d = p.dim
        scale = self._conv_scale(d)
        total = 0.0
        for wi, mi, ci in zip(p.weights, p.means, p.covs):
            covs = ci + p.covs + self.lengthscale**2 * np.eye(d)
            total += wi * float(_gaussian_overlap(mi[None, :], p.means, covs, p.weights, scale)[0])
        return total


def extent(p: GaussianMixture) -> float:
    """Width of ``p``: largest side of the box covering every component to 2 sigma."""
    lo, hi = p.bounding_box(num_std=2.0)
    return float(np.max(hi - lo))


def default_lengthscale(p: GaussianMixture, fraction: float = 1.0 / 20.0) -> float:
    """Kernel width as a fixed fraction of :func:`extent`."""
    return fraction * extent(p)
