"""Greedy sample selection over a fixed candidate pool.

Four methods are supported:

``herding``
    kernel herding with uniform weights;
``sbq``
    sequential Bayesian quadrature, greedy in the BQ posterior variance;
``iid``
    plain Monte Carlo draws from the target;
``herding-bq-reweight``
    herding locations, scored with BQ weights.

Both greedy selectors keep per-candidate running state so that one step
costs O(P n) rather than re-solving a linear system for every candidate.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import CapacityError, InputError
from .gmm import GaussianMixture, sample
from .kernel import RbfKernel
from .linalg import DEFAULT_JITTER
from .objectives import QuadratureState, bq_variance, bq_weights

log = logging.getLogger(__name__)

METHODS = ("herding", "sbq", "iid", "herding-bq-reweight")

#: Which weights each method's integral estimator uses.
ESTIMATOR_WEIGHTS = {"herding": "uniform", "iid": "uniform", "sbq": "bq", "herding-bq-reweight": "bq"}


class CandidatePool:
    """Fixed set of candidate locations with their mean embeddings.

    Kernel columns ``k(pool, x_i)`` for selected candidates are computed on
    first use and cached.
    """

    def __init__(self, points, kernel: RbfKernel, gmm: GaussianMixture):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != gmm.dim:
            raise InputError("pool dimension does not match the target")
        pts.setflags(write=False)
        self.points = pts
        self.kernel = kernel
        self.gmm = gmm
        self.embeddings = np.atleast_1d(kernel.mean_embedding(gmm, pts))
        self.embeddings.setflags(write=False)
        self.selected = np.zeros(len(pts), dtype=bool)
        self._columns: dict[int, np.ndarray] = {}

    @classmethod
    def draw(cls, gmm: GaussianMixture, kernel: RbfKernel, rng: np.random.Generator, size: int) -> "CandidatePool":
        return cls(sample(gmm, rng, size), kernel, gmm)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def remaining(self) -> int:
        return int(np.count_nonzero(~self.selected))

    def column(self, i: int) -> np.ndarray:
        col = self._columns.get(i)
        if col is None:
            col = self.kernel.column(self.points, self.points[i])
            self._columns[i] = col
        return col

    def mark(self, i: int) -> None:
        if self.selected[i]:
            raise InputError(f"candidate {i} was already selected")
        self.selected[i] = True

    def fresh(self) -> "CandidatePool":
        """Same candidates with an empty selection (embeddings and columns shared)."""
        other = object.__new__(CandidatePool)
        other.points = self.points
        other.kernel = self.kernel
        other.gmm = self.gmm
        other.embeddings = self.embeddings
        other.selected = np.zeros(len(self.points), dtype=bool)
        other._columns = self._columns
        return other


def _argmax_unselected(scores: np.ndarray, selected: np.ndarray) -> int:
    scores = np.where(selected, -np.inf, scores)
    i = int(np.argmax(scores))  # first maximum, i.e. lowest index on ties
    if not np.isfinite(scores[i]):
        raise CapacityError("no selectable candidates left in the pool")
    return i


class KernelHerding:
    """Greedy herding: maximize ``z(x) - 1/(n+1) sum_m k(x, x_m)``.

    This is the exact one-step minimizer of the uniform-weight MMD when
    ``k(x, x)`` is constant. The kernel sums are kept per candidate and
    updated by one kernel column per step.
    """

    def __init__(self, pool: CandidatePool):
        self.pool = pool
        self.order: list[int] = []
        self._ksum = np.zeros(len(pool))

    @property
    def n(self) -> int:
        return len(self.order)

    def scores(self) -> np.ndarray:
        return self.pool.embeddings - self._ksum / (self.n + 1)

    def step(self) -> int:
        """Index of the next herding sample (not yet committed)."""
        if self.pool.remaining == 0:
            raise CapacityError("candidate pool exhausted")
        return _argmax_unselected(self.scores(), self.pool.selected)

    def select(self, i: int) -> None:
        self.pool.mark(i)
        self._ksum += self.pool.column(i)
        self.order.append(i)


class SequentialBQ:
    """Greedy minimization of the BQ posterior variance over the pool.

    For every candidate ``c`` the selector keeps ``v_c = L^{-1} k(X, c)``
    together with ``|v_c|^2`` and ``v_c . (L^{-1} z)``, where ``L`` is the
    Cholesky factor of the selected points. Appending a point adds one entry
    to every ``v_c``, which is the only O(P n) work per step.
    """

    def __init__(self, pool: CandidatePool, jitter: float = DEFAULT_JITTER, capacity: int | None = None):
        self.pool = pool
        self.jitter = float(jitter)
        self.state = QuadratureState.empty(pool.gmm, pool.kernel, jitter)
        self.order: list[int] = []
        self.flagged: set[int] = set()
        cap = capacity or 64
        self._V = np.empty((cap, len(pool)))
        self._a = np.empty(cap)
        self._sumsq = np.zeros(len(pool))
        self._dot = np.zeros(len(pool))

    @property
    def n(self) -> int:
        return len(self.order)

    def schur(self) -> np.ndarray:
        """Per-candidate ``k(c, c) + jitter - k_c^T K^{-1} k_c``."""
        return 1.0 + self.jitter - self._sumsq

    def scores(self) -> np.ndarray:
        """Variance reduction for every candidate; ``-inf`` where undefined."""
        denom = self.schur()
        num = self.pool.embeddings - self._dot
        out = np.full(len(self.pool), -np.inf)
        ok = denom > 0
        out[ok] = num[ok] ** 2 / denom[ok]
        bad = np.flatnonzero(~ok & ~self.pool.selected)
        for i in bad:
            if int(i) not in self.flagged:
                self.flagged.add(int(i))
                log.warning("skipping candidate %d: Gram matrix would be numerically singular", i)
        return out

    def step(self) -> int:
        if self.pool.remaining == 0:
            raise CapacityError("candidate pool exhausted")
        return _argmax_unselected(self.scores(), self.pool.selected)

    def _grow(self) -> None:
        cap = 2 * self._V.shape[0]
        V = np.empty((cap, self._V.shape[1]))
        V[: self.n] = self._V[: self.n]
        a = np.empty(cap)
        a[: self.n] = self._a[: self.n]
        self._V, self._a = V, a

    def select(self, i: int) -> None:
        n = self.n
        if n == self._V.shape[0]:
            self._grow()
        row = self._V[:n, i]
        kcol = self.pool.column(i)
        chol = linalg.append(self.state.chol, kcol[self.order], 1.0 + self.jitter)
        d = chol.lower[n, n]
        v_new = (kcol - row @ self._V[:n]) / d
        a_new = (self.pool.embeddings[i] - row @ self._a[:n]) / d
        self._V[n] = v_new
        self._a[n] = a_new
        self._sumsq += v_new * v_new
        self._dot += v_new * a_new
        self.pool.mark(i)
        self.order.append(i)
        z = np.append(self.state.z, self.pool.embeddings[i])
        pts = np.vstack([self.state.points, self.pool.points[i]])
        self.state = QuadratureState(self.state.gmm, self.state.kernel, pts, chol, z, self.state.initial_variance)


@dataclass(frozen=True)
class ConvergenceRecord:
    """Diagnostics for the first ``n`` samples of a run."""

    n: int
    method: str
    mmd_uniform: float
    mmd_bq: float
    weight_sum: float
    weight_min: float
    weight_max: float
    num_negative: int
    wall_millis: float
    mean_abs_error: float | None = None

    @property
    def bound(self) -> float:
        return self.mmd_bq


@dataclass(frozen=True)
class SelectionRun:
    """The outcome of one selection run.

    ``weights[n - 1]`` holds the BQ weights of the first ``n`` points.
    """

    method: str
    points: np.ndarray
    indices: np.ndarray | None
    records: tuple
    weights: tuple = field(repr=False)
    initial_variance: float = 0.0

    def __len__(self) -> int:
        return self.points.shape[0]

    def mmd_uniform(self) -> np.ndarray:
        return np.array([r.mmd_uniform for r in self.records])

    def mmd_bq(self) -> np.ndarray:
        return np.array([r.mmd_bq for r in self.records])

    def estimator_weights(self, n: int) -> np.ndarray:
        """Weights the method's estimator applies to its first ``n`` points."""
        if ESTIMATOR_WEIGHTS[self.method] == "bq":
            return self.weights[n - 1]
        return np.full(n, 1.0 / n)


class _Recorder:
    """Accumulates per-prefix MMD diagnostics as points arrive."""

    def __init__(self, method: str, gmm, kernel, jitter):
        self.method = method
        self.kernel = kernel
        self.iv = kernel.initial_variance(gmm)
        self.sum_z = 0.0
        self.sum_k = 0.0
        self.points: list[np.ndarray] = []
        self.records: list[ConvergenceRecord] = []
        self.weights: list[np.ndarray] = []
        self.elapsed = 0.0

    def add(self, x, z, state: QuadratureState, seconds: float, kcol=None):
        """``kcol`` is ``k(previous points, x)`` if the caller already has it."""
        n = len(self.points) + 1
        if kcol is None:
            kcol = self.kernel.column(np.array(self.points), x) if self.points else np.zeros(0)
        self.sum_z += z
        self.sum_k += 2.0 * float(np.sum(kcol)) + 1.0
        self.points.append(np.asarray(x, dtype=float))
        self.elapsed += seconds
        mmd2_u = max(self.iv - 2.0 * self.sum_z / n + self.sum_k / n**2, 0.0)
        w = bq_weights(state)
        self.weights.append(w)
        self.records.append(
            ConvergenceRecord(
                n=n,
                method=self.method,
                mmd_uniform=float(np.sqrt(mmd2_u)),
                mmd_bq=float(np.sqrt(bq_variance(state))),
                weight_sum=float(w.sum()),
                weight_min=float(w.min()),
                weight_max=float(w.max()),
                num_negative=int(np.count_nonzero(w < 0)),
                wall_millis=1e3 * self.elapsed,
            )
        )

    def finish(self, indices) -> SelectionRun:
        pts = np.array(self.points) if self.points else np.zeros((0, 0))
        idx = None if indices is None else np.asarray(indices, dtype=int)
        return SelectionRun(self.method, pts, idx, tuple(self.records), tuple(self.weights), self.iv)


def iid_select(p: GaussianMixture, rng: np.random.Generator, n_samples: int, kernel: RbfKernel,
               jitter: float = DEFAULT_JITTER) -> SelectionRun:
    """``n_samples`` Monte Carlo draws from ``p`` with per-prefix diagnostics."""
    if n_samples < 1:
        raise InputError("n_samples must be at least 1")
    rec = _Recorder("iid", p, kernel, jitter)
    state = QuadratureState.empty(p, kernel, jitter)
    for _ in range(n_samples):
        t0 = time.perf_counter()
        x = sample(p, rng, 1)[0]
        dt = time.perf_counter() - t0
        state = state.append(x)
        rec.add(x, state.z[-1], state, dt)
    return rec.finish(None)


def run_selection(method: str, pool: CandidatePool | None, n_samples: int, kernel: RbfKernel, gmm: GaussianMixture,
                  rng: np.random.Generator | None = None, jitter: float = DEFAULT_JITTER) -> SelectionRun:
    """Run ``n_samples`` steps of ``method`` and record every prefix.

    ``pool`` is required for the greedy methods and ignored by ``iid``,
    which needs ``rng`` instead. The pool's selection mask is not modified.
    """
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "iid":
        if rng is None:
            raise InputError("iid selection needs a random generator")
        return iid_select(gmm, rng, n_samples, kernel, jitter)
    if pool is None:
        raise InputError(f"{method} needs a candidate pool")
    if n_samples > len(pool):
        raise CapacityError(f"requested {n_samples} samples from a pool of {len(pool)}")
    if n_samples < 1:
        raise InputError("n_samples must be at least 1")
    pool = pool.fresh()
    rec = _Recorder(method, gmm, kernel, jitter)
    if method == "sbq":
        sel = SequentialBQ(pool, jitter, capacity=n_samples)
        for _ in range(n_samples):
            t0 = time.perf_counter()
            i = sel.step()
            sel.select(i)
            dt = time.perf_counter() - t0
            kcol = pool.column(i)[sel.order[:-1]]
            rec.add(pool.points[i], pool.embeddings[i], sel.state, dt, kcol)
        return rec.finish(sel.order)

    herd = KernelHerding(pool)
    state = QuadratureState.empty(gmm, kernel, jitter)
    for _ in range(n_samples):
        t0 = time.perf_counter()
        i = herd.step()
        herd.select(i)
        dt = time.perf_counter() - t0
        kcol = pool.column(i)[herd.order[:-1]]
        chol = linalg.append(state.chol, kcol, 1.0 + jitter)
        state = QuadratureState(gmm, kernel, np.vstack([state.points, pool.points[i]]), chol,
                                np.append(state.z, pool.embeddings[i]), state.initial_variance)
        rec.add(pool.points[i], pool.embeddings[i], state, dt, kcol)
    return rec.finish(herd.order)
