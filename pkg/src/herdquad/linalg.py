"""Cholesky factors of kernel Gram matrices, with O(n^2) single-point append."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InputError, NotPositiveDefinite

#: Relative jitter added to the diagonal of every Gram matrix, times ``k(x, x)``.
DEFAULT_JITTER = 1e-10


@dataclass(frozen=True)
class CholFactor:
    """Lower-triangular ``L`` with ``L @ L.T == K + jitter * I``.

    The factor is immutable; :func:`append` returns a new one.
    """

    lower: np.ndarray
    jitter: float = 0.0

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        if lower.ndim != 2 or lower.shape[0] != lower.shape[1]:
            raise InputError("factor must be square")
        lower.setflags(write=False)
        object.__setattr__(self, "lower", lower)

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    @classmethod
    def empty(cls, jitter: float = DEFAULT_JITTER) -> "CholFactor":
        return cls(np.zeros((0, 0), order="F"), jitter)

    def matrix(self) -> np.ndarray:
        """Reconstruct ``K + jitter * I``."""
        return self.lower @ self.lower.T

    def forward(self, b) -> np.ndarray:
        """``L^{-1} b``; ``b`` may be a vector or an ``(n, m)`` block."""
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise InputError(f"right-hand side has length {b.shape[0]}, factor has size {self.n}")
        if self.n == 0:
            return b.copy()
        return solve_triangular(self.lower, b, lower=True, check_finite=False)


def factor(K, jitter: float = DEFAULT_JITTER) -> CholFactor:
    """Cholesky factor of ``K + jitter * I``.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is not strictly positive.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape[0] != K.shape[1]:
        raise InputError("matrix must be square")
    if jitter < 0:
        raise InputError("jitter must be nonnegative")
    if np.max(np.abs(K - K.T), initial=0.0) > 1e-10:
        raise InputError("matrix is not symmetric")
    A = K + jitter * np.eye(K.shape[0])
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("non-positive pivot in Cholesky factorization") from exc
    if np.any(np.diag(L) <= 0) or not np.all(np.isfinite(L)):
        raise NotPositiveDefinite("non-positive pivot in Cholesky factorization")
    return CholFactor(np.asfortranarray(L), float(jitter))


def append(f: CholFactor, new_col, new_diag: float) -> CholFactor:
    """Grow ``f`` by one row/column.

    ``new_col`` is ``k(X, x_new)`` without jitter and ``new_diag`` is
    ``k(x_new, x_new) + jitter``. One triangular solve of size ``n``.
    """
    new_col = np.asarray(new_col, dtype=float).ravel()
    n = f.n
    if new_col.shape[0] != n:
        raise InputError(f"new column has length {new_col.shape[0]}, factor has size {n}")
    row = f.forward(new_col)
    schur = float(new_diag) - float(row @ row)
    if not schur > 0:
        raise NotPositiveDefinite(f"Schur complement {schur:.3e} is not positive")
    L = np.zeros((n + 1, n + 1), order="F")
    L[:n, :n] = f.lower
    L[n, :n] = row
    L[n, n] = np.sqrt(schur)
    return CholFactor(L, f.jitter)


def solve(f: CholFactor, b) -> np.ndarray:
    """``(K + jitter * I)^{-1} b`` by forward then back substitution."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != f.n:
        raise InputError(f"right-hand side has length {b.shape[0]}, factor has size {f.n}")
    if f.n == 0:
        return b.copy()
    y = solve_triangular(f.lower, b, lower=True, check_finite=False)
    return solve_triangular(f.lower, y, lower=True, trans="T", check_finite=False)
