"""Random test integrands with exact integrals against a Gaussian mixture.

Two families are provided. :class:`RkhsFunction` lies in the unit ball of
the kernel's RKHS, so the MMD bounds its quadrature error.
:class:`BumpFunction` is a sum of anisotropic Gaussian bumps and lies
outside the model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InputError
from .gmm import GaussianMixture, random_spd, sample
from .kernel import RbfKernel
from .objectives import WeightedSampleSet

NUM_TERMS = 10
MAX_REDRAWS = 20


@dataclass(frozen=True)
class RkhsFunction:
    """``f(x) = sum_i coefficients_i k(x, centers_i)``."""

    centers: np.ndarray
    coefficients: np.ndarray
    kernel: RbfKernel
    seed: int | None = None

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        a = np.atleast_1d(np.asarray(self.coefficients, dtype=float))
        if c.shape[0] != a.shape[0]:
            raise InputError("one coefficient per center required")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "coefficients", a)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def norm(self) -> float:
        """RKHS norm ``sqrt(a^T K_c a)``."""
        a = self.coefficients
        return float(np.sqrt(a @ self.kernel.gram(self.centers) @ a))

    def to_dict(self) -> dict:
        return {
            "type": "rkhs",
            "centers": self.centers.tolist(),
            "coefficients": self.coefficients.tolist(),
            "lengthscale": self.kernel.lengthscale,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class BumpFunction:
    """``f(x) = sum_i a_i exp(-(x - c_i)^T S_i^{-1} (x - c_i) / 2)``."""

    coefficients: np.ndarray
    centers: np.ndarray
    covariances: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.coefficients, dtype=float))
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        S = np.asarray(self.covariances, dtype=float)
        if S.ndim == 1:
            S = S[:, None, None]
        d = c.shape[1]
        if not (a.shape[0] == c.shape[0] == S.shape[0]) or S.shape[1:] != (d, d):
            raise InputError("inconsistent bump parameter shapes")
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise InputError("bump covariances must be positive definite") from exc
        object.__setattr__(self, "coefficients", a)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "covariances", S)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def to_dict(self) -> dict:
        return {
            "type": "bumps",
            "centers": self.centers.tolist(),
            "coefficients": self.coefficients.tolist(),
            "covariances": self.covariances.tolist(),
            "seed": self.seed,
        }


TestFunction = Union[RkhsFunction, BumpFunction]


def draw_rkhs_function(rng: np.random.Generator, k: RbfKernel, p: GaussianMixture,
                       num_terms: int = NUM_TERMS, seed: int | None = None) -> RkhsFunction:
    """Centers from ``p``, standard normal coefficients, rescaled to unit RKHS norm.

    Coincident centers make the Gram matrix singular; those draws are
    repeated, at most :data:`MAX_REDRAWS` times.
    """
    for _ in range(MAX_REDRAWS):
        centers = sample(p, rng, num_terms)
        coef = rng.standard_normal(num_terms)
        K = k.gram(centers)
        try:
            np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            continue
        norm2 = float(coef @ K @ coef)
        if norm2 <= 0:
            continue
        return RkhsFunction(centers, coef / np.sqrt(norm2), k, seed)
    raise InputError("could not draw well-separated centers")


def draw_bump_function(rng: np.random.Generator, k: RbfKernel, p: GaussianMixture,
                       num_terms: int = NUM_TERMS, seed: int | None = None) -> BumpFunction:
    """Amplitudes uniform in [-2, 2], centers from ``p``, bump widths from ``l/5`` to ``5 l``."""
    ls = k.lengthscale
    coef = rng.uniform(-2.0, 2.0, size=num_terms)
    centers = sample(p, rng, num_terms)
    covs = np.stack([random_spd(rng, p.dim, (ls / 5) ** 2, (5 * ls) ** 2, log_uniform=True) for _ in range(num_terms)])
    return BumpFunction(coef, centers, covs, seed)


def draw_functions(family: str, rng: np.random.Generator, k: RbfKernel, p: GaussianMixture, count: int) -> list:
    if family == "rkhs":
        draw = draw_rkhs_function
    elif family == "bumps":
        draw = draw_bump_function
    else:
        raise InputError(f"unknown function family {family!r}")
    return [draw(rng, k, p) for _ in range(count)]


def eval_function(f: TestFunction, x) -> np.ndarray | float:
    """Evaluate ``f`` at one point ``(d,)`` or a batch ``(M, d)``."""
    pts = np.asarray(x, dtype=float)
    single = pts.ndim <= 1
    pts = pts.reshape(1, -1) if single else pts
    if pts.shape[1] != f.dim:
        raise InputError(f"expected points of dimension {f.dim}, got {pts.shape[1]}")
    if isinstance(f, RkhsFunction):
        out = f.kernel.gram(pts, f.centers) @ f.coefficients
    else:
        out = np.zeros(pts.shape[0])
        for a, c, S in zip(f.coefficients, f.centers, f.covariances):
            y = solve_triangular(np.linalg.cholesky(S), (pts - c).T, lower=True)
            out += a * np.exp(-0.5 * np.sum(y * y, axis=0))
    return float(out[0]) if single else out


def exact_integral(f: TestFunction, p: GaussianMixture) -> float:
    """``Z = int f(x) p(x) dx`` in closed form."""
    if f.dim != p.dim:
        raise InputError("function and target dimensions differ")
    if isinstance(f, RkhsFunction):
        return float(f.coefficients @ np.atleast_1d(f.kernel.mean_embedding(p, f.centers)))
    d = p.dim
    total = 0.0
    for a, c, S in zip(f.coefficients, f.centers, f.covariances):
        # the bump is |2 pi S|^{1/2} N(x; c, S); integrate that Gaussian against each component
        scale = np.sqrt(np.linalg.det(2.0 * np.pi * S))
        for w, mu, cov in zip(p.weights, p.means, p.covs):
            C = S + cov
            diff = c - mu
            maha = float(diff @ np.linalg.solve(C, diff))
            total += a * w * scale * np.exp(-0.5 * maha) / np.sqrt(np.linalg.det(2.0 * np.pi * C))
    return float(total)


def estimate_integral(f: TestFunction, s: WeightedSampleSet) -> float:
    """Quadrature estimate ``sum_n w_n f(x_n)``."""
    if len(s) == 0:
        return 0.0
    return float(s.weights @ np.atleast_1d(eval_function(f, s.points)))


def function_from_dict(data: dict) -> TestFunction:
    try:
        kind = data["type"]
        if kind == "rkhs":
            return RkhsFunction(data["centers"], data["coefficients"], RbfKernel(data["lengthscale"]), data.get("seed"))
        if kind == "bumps":
            return BumpFunction(data["coefficients"], data["centers"], data["covariances"], data.get("seed"))
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed function description: {exc}") from exc
    raise InputError(f"unknown function type {kind!r}")


def save_functions(functions: Sequence[TestFunction], path) -> None:
    Path(path).write_text(json.dumps([f.to_dict() for f in functions]) + "\n")


def load_functions(path) -> list:
    return [function_from_dict(d) for d in json.loads(Path(path).read_text())]
