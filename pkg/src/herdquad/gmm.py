"""Finite mixtures of full-covariance Gaussians: the known target density."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError

#: Seed used to generate the bundled default mixture (``data/default_gmm.json``).
DEFAULT_GMM_SEED = 1203
DEFAULT_NUM_COMPONENTS = 20
DEFAULT_EIGEN_RANGE = (0.005, 0.05)


@dataclass(frozen=True)
class GaussianComponent:
    """A single Gaussian with mean ``mean`` and covariance ``cov``."""

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1:
            raise InputError("mean must be a vector")
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise InputError(f"covariance shape {cov.shape} does not match mean dimension {d}")
        if not np.all(np.isfinite(cov)) or not np.all(np.isfinite(mean)):
            raise InputError("component parameters must be finite")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12:
            raise InputError("covariance is not symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise InputError("covariance is not positive definite") from exc
        mean.setflags(write=False)
        cov.setflags(write=False)
        chol.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


class GaussianMixture:
    """Weighted sum of :class:`GaussianComponent` densities in ``d`` dimensions.

    Instances are immutable after construction.

    Parameters
    ----------
    weights : array_like, shape (J,)
        Positive mixing proportions summing to one.
    components : sequence of GaussianComponent
        The ``J`` components, all of the same dimension.
    """

    def __init__(self, weights: Sequence[float], components: Sequence[GaussianComponent]):
        weights = np.asarray(weights, dtype=float).ravel()
        components = tuple(components)
        if len(components) == 0:
            raise InputError("a mixture needs at least one component")
        if weights.shape[0] != len(components):
            raise InputError("number of weights and components differ")
        if np.any(~np.isfinite(weights)) or np.any(weights <= 0):
            raise InputError("mixture weights must be finite and strictly positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise InputError(f"mixture weights sum to {weights.sum():.15g}, not 1")
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise InputError("all components must share one dimension")
        weights.setflags(write=False)
        self._weights = weights
        self._components = components
        self._dim = dims.pop()
        self._means = np.stack([c.mean for c in components])
        self._covs = np.stack([c.cov for c in components])
        self._means.setflags(write=False)
        self._covs.setflags(write=False)

    @classmethod
    def from_arrays(cls, weights, means, covs) -> "GaussianMixture":
        means = np.asarray(means, dtype=float)
        covs = np.asarray(covs, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        if covs.ndim == 1:
            covs = covs[:, None, None]
        return cls(weights, [GaussianComponent(m, c) for m, c in zip(means, covs)])

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def components(self) -> tuple:
        return self._components

    @property
    def means(self) -> np.ndarray:
        """Component means stacked as ``(J, d)``."""
        return self._means

    @property
    def covs(self) -> np.ndarray:
        """Component covariances stacked as ``(J, d, d)``."""
        return self._covs

    def __len__(self) -> int:
        return len(self._components)

    def mean(self) -> np.ndarray:
        """Mean of the mixture, ``sum_j pi_j mu_j``."""
        return self._weights @ self._means

    def covariance(self) -> np.ndarray:
        """Covariance of the mixture (law of total covariance)."""
        mu = self.mean()
        diff = self._means - mu
        between = np.einsum("j,ja,jb->ab", self._weights, diff, diff)
        within = np.einsum("j,jab->ab", self._weights, self._covs)
        return within + between

    def bounding_box(self, num_std: float = 3.0) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box covering every component to ``num_std`` standard deviations."""
        std = np.sqrt(np.diagonal(self._covs, axis1=1, axis2=2))
        lo = np.min(self._means - num_std * std, axis=0)
        hi = np.max(self._means + num_std * std, axis=0)
        return lo, hi

    def __repr__(self) -> str:
        return f"GaussianMixture(dim={self.dim}, components={len(self)})"

    # serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "weights": self._weights.tolist(),
            "components": [{"mean": c.mean.tolist(), "cov": c.cov.tolist()} for c in self._components],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianMixture":
        try:
            dim = int(data["dim"])
            weights = data["weights"]
            comps = [GaussianComponent(c["mean"], c["cov"]) for c in data["components"]]
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed mixture description: {exc}") from exc
        gmm = cls(weights, comps)
        if gmm.dim != dim:
            raise InputError(f"declared dim {dim} does not match component dimension {gmm.dim}")
        return gmm

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "GaussianMixture":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read mixture file {path}: {exc}") from exc
        return cls.from_dict(data)


def _as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    """Coerce ``x`` to ``(M, dim)``; second value tells whether a single point was given."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise InputError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    return x, single


def gaussian_pdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Multivariate normal density at the rows of ``x`` (shape ``(M, d)``)."""
    d = mean.shape[0]
    L = np.linalg.cholesky(cov)
    sol = np.linalg.solve(L, (x - mean).T)
    maha = np.sum(sol * sol, axis=0)
    log_norm = 0.5 * d * np.log(2.0 * np.pi) + np.sum(np.log(np.diag(L)))
    return np.exp(-0.5 * maha - log_norm)


def density(gmm: GaussianMixture, x) -> np.ndarray | float:
    """Mixture density ``sum_j pi_j N(x; mu_j, Sigma_j)``.

    ``x`` may be a single point of shape ``(d,)`` or a batch ``(M, d)``.
    Values far in the tails underflow to 0.
    """
    pts, single = _as_points(x, gmm.dim)
    out = np.zeros(pts.shape[0])
    for w, comp in zip(gmm.weights, gmm.components):
        out += w * gaussian_pdf(pts, comp.mean, comp.cov)
    return float(out[0]) if single else out


def sample(gmm: GaussianMixture, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. points, returned as an ``(n, d)`` array."""
    if n < 1:
        raise InputError("sample count must be at least 1")
    labels = rng.choice(len(gmm), size=n, p=gmm.weights)
    eps = rng.standard_normal((n, gmm.dim))
    out = np.empty((n, gmm.dim))
    for j, comp in enumerate(gmm.components):
        idx = labels == j
        out[idx] = comp.mean + eps[idx] @ comp.chol.T
    return out


def random_spd(rng: np.random.Generator, dim: int, eig_lo: float, eig_hi: float, log_uniform: bool = False) -> np.ndarray:
    """Random rotation applied to eigenvalues drawn in ``[eig_lo, eig_hi]``."""
    if log_uniform:
        eig = np.exp(rng.uniform(np.log(eig_lo), np.log(eig_hi), size=dim))
    else:
        eig = rng.uniform(eig_lo, eig_hi, size=dim)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    cov = (q * eig) @ q.T
    return 0.5 * (cov + cov.T)


def make_random_gmm(
    rng: np.random.Generator,
    num_components: int = DEFAULT_NUM_COMPONENTS,
    dim: int = 2,
    eig_range: tuple[float, float] = DEFAULT_EIGEN_RANGE,
) -> GaussianMixture:
    """Means uniform in the unit cube, random SPD covariances, Dirichlet(1) weights."""
    means = rng.uniform(0.0, 1.0, size=(num_components, dim))
    covs = [random_spd(rng, dim, *eig_range) for _ in range(num_components)]
    weights = rng.dirichlet(np.ones(num_components))
    weights = weights / weights.sum()
    return GaussianMixture.from_arrays(weights, means, covs)


def make_default_gmm() -> GaussianMixture:
    """Regenerate the bundled 20-component 2D mixture from :data:`DEFAULT_GMM_SEED`."""
    return make_random_gmm(np.random.default_rng(DEFAULT_GMM_SEED))


def default_gmm() -> GaussianMixture:
    """The checked-in 20-component 2D target used by every default experiment."""
    text = resources.files("herdquad").joinpath("data/default_gmm.json").read_text()
    return GaussianMixture.from_dict(json.loads(text))
