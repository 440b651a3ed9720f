import logging

import numpy as np
import pytest

from herdquad.errors import CapacityError, InputError
from herdquad.gmm import GaussianMixture, sample
from herdquad.kernel import RbfKernel
from herdquad.objectives import QuadratureState, WeightedSampleSet, bq_variance, mmd_squared
from herdquad.selectors import (
    METHODS,
    CandidatePool,
    KernelHerding,
    SequentialBQ,
    iid_select,
    run_selection,
)

JITTER = 1e-10


@pytest.fixture(scope="module")
def pool2000(gmm, kernel):
    return CandidatePool.draw(gmm, kernel, np.random.default_rng(0), 2000)


def naive_herding(points, z, k, steps):
    chosen = []
    for n in range(steps):
        ksum = k.gram(points, points[chosen]).sum(axis=1) if chosen else np.zeros(len(points))
        score = z - ksum / (n + 1)
        score[chosen] = -np.inf
        chosen.append(int(np.argmax(score)))
    return chosen


def naive_sbq(points, k, p, steps, jitter=JITTER):
    """Refactor the (n+1)-point system from scratch for every candidate."""
    z_all = k.mean_embedding(p, points)
    iv = k.initial_variance(p)
    chosen = []
    for n in range(steps):
        cand = np.setdiff1d(np.arange(len(points)), chosen)
        X = points[chosen]
        P = len(cand)
        Ks = np.empty((P, n + 1, n + 1))
        Ks[:, :n, :n] = k.gram(X) + jitter * np.eye(n)
        cross = k.gram(points[cand], X) if n else np.zeros((P, 0))
        Ks[:, n, :n] = cross
        Ks[:, :n, n] = cross
        Ks[:, n, n] = 1.0 + jitter
        zs = np.empty((P, n + 1))
        zs[:, :n] = z_all[chosen]
        zs[:, n] = z_all[cand]
        var = iv - np.einsum("pi,pi->p", zs, np.linalg.solve(Ks, zs[..., None])[..., 0])
        chosen.append(int(cand[np.argmin(var)]))
    return chosen


def test_pool_embeddings(gmm, kernel, pool2000):
    assert np.max(np.abs(pool2000.embeddings - kernel.mean_embedding(gmm, pool2000.points))) <= 1e-12


def test_herding_first_step_is_max_embedding(pool2000):
    h = KernelHerding(pool2000.fresh())
    assert h.step() == int(np.argmax(pool2000.embeddings))


def test_single_candidate_pool(gmm, kernel):
    pool = CandidatePool([[0.2, 0.9]], kernel, gmm)
    assert KernelHerding(pool.fresh()).step() == 0
    assert SequentialBQ(pool.fresh()).step() == 0


def test_exhausted_pool(gmm, kernel):
    pool = CandidatePool([[0.2, 0.9], [0.5, 0.5]], kernel, gmm)
    h = KernelHerding(pool)
    h.select(h.step())
    h.select(h.step())
    with pytest.raises(CapacityError):
        h.step()
    with pytest.raises(InputError):
        pool.mark(0)


def test_herding_cached_matches_naive(gmm, kernel):
    pool = CandidatePool.draw(gmm, kernel, np.random.default_rng(3), 10000)
    run = run_selection("herding", pool, 200, kernel, gmm)
    expect = naive_herding(pool.points, pool.embeddings, kernel, 200)
    assert run.indices.tolist() == expect


def test_sbq_first_step_matches_herding(pool2000):
    assert SequentialBQ(pool2000.fresh()).step() == KernelHerding(pool2000.fresh()).step()


def test_sbq_second_step_two_by_two(gmm, kernel, pool2000):
    sel = SequentialBQ(pool2000.fresh(), JITTER)
    first = sel.step()
    sel.select(first)
    x1 = pool2000.points[first]
    z1 = pool2000.embeddings[first]
    # hand inversion of [[1+j, k], [k, 1+j]]: reduction = (zc - k z1/(1+j))^2 / (1+j - k^2/(1+j))
    kc = kernel.column(pool2000.points, x1)
    zc = pool2000.embeddings
    a = 1.0 + JITTER
    expect = (zc - kc * z1 / a) ** 2 / (a - kc**2 / a)
    got = sel.scores()
    mask = ~sel.pool.selected
    assert np.max(np.abs(got[mask] - expect[mask])) < 1e-12


def test_sbq_cached_matches_naive(gmm, kernel, pool2000):
    run = run_selection("sbq", pool2000, 50, kernel, gmm)
    assert run.indices.tolist() == naive_sbq(pool2000.points, kernel, gmm, 50)


def test_sbq_scores_match_variance_reduction(gmm, kernel, pool2000):
    from herdquad.objectives import variance_reduction

    sel = SequentialBQ(pool2000.fresh(), JITTER)
    for _ in range(15):
        sel.select(sel.step())
    scores = sel.scores()
    for i in np.random.default_rng(0).choice(np.flatnonzero(~sel.pool.selected), 20, replace=False):
        assert scores[i] == pytest.approx(variance_reduction(sel.state, pool2000.points[i]), abs=1e-12)


def test_sbq_skips_singular_candidate(gmm, caplog):
    # with zero jitter a candidate coincident (numerically) with a selected point has no valid Schur complement
    k = RbfKernel(0.2)
    pts = np.array([[0.5, 0.5], [0.5, 0.5 + 1e-9], [0.9, 0.1]])
    pool = CandidatePool(pts, k, gmm)
    sel = SequentialBQ(pool, jitter=0.0)
    sel.select(0)
    with caplog.at_level(logging.WARNING):
        nxt = sel.step()
    assert nxt == 2
    assert 1 in sel.flagged


def test_pool_exhaust_boundary(gmm, kernel):
    pool = CandidatePool.draw(gmm, kernel, np.random.default_rng(4), 30)
    for m in ("herding", "sbq"):
        run = run_selection(m, pool, 30, kernel, gmm)
        assert sorted(run.indices.tolist()) == list(range(30))
    with pytest.raises(CapacityError):
        run_selection("sbq", pool, 31, kernel, gmm)


def test_iid_determinism_and_first_point(gmm, kernel):
    a = iid_select(gmm, np.random.default_rng(5), 10, kernel)
    b = iid_select(gmm, np.random.default_rng(5), 10, kernel)
    assert np.array_equal(a.points, b.points)
    assert a.mmd_uniform().tolist() == b.mmd_uniform().tolist()
    x = a.points[0]
    expect = kernel.initial_variance(gmm) - 2 * kernel.mean_embedding(gmm, x) + 1
    assert a.records[0].mmd_uniform ** 2 == pytest.approx(expect, rel=1e-12)


def test_iid_rate_is_root_n(gmm, kernel):
    ns = np.arange(16, 257)
    curves = [iid_select(gmm, np.random.default_rng(s), 256, kernel).mmd_uniform() for s in range(20)]
    mean = np.mean(curves, axis=0)
    slope = np.polyfit(np.log(ns), np.log(mean[ns - 1]), 1)[0]
    assert -0.65 <= slope <= -0.35


@pytest.fixture(scope="module")
def default_runs(gmm, kernel):
    pool = CandidatePool.draw(gmm, kernel, np.random.default_rng(0), 10000)
    return {m: run_selection(m, pool, 200, kernel, gmm, rng=np.random.default_rng(1)) for m in METHODS}


def test_run_shapes(default_runs):
    for m, run in default_runs.items():
        assert len(run) == 200 and len(run.records) == 200
        assert [r.n for r in run.records] == list(range(1, 201))
        assert all(r.method == m for r in run.records)


def test_sbq_variance_non_increasing(default_runs):
    v = default_runs["sbq"].mmd_bq()
    assert np.all(np.diff(v) <= 1e-12)


def test_method_ordering(default_runs):
    sbq = default_runs["sbq"].mmd_bq() ** 2
    reweighted = default_runs["herding-bq-reweight"].mmd_bq() ** 2
    herding = default_runs["herding"].mmd_uniform() ** 2
    assert np.all(sbq <= reweighted + 1e-12)
    assert np.all(reweighted <= herding + 1e-12)


def test_reweight_uses_herding_locations(default_runs):
    assert np.array_equal(default_runs["herding"].points, default_runs["herding-bq-reweight"].points)


def test_sbq_is_sample_efficient(default_runs):
    target = default_runs["herding"].records[19].mmd_uniform
    needed = int(np.argmax(default_runs["sbq"].mmd_bq() <= target)) + 1
    assert default_runs["sbq"].mmd_bq()[needed - 1] <= target
    assert needed <= 10


def test_records_reproducible_from_trajectory(gmm, kernel, default_runs):
    for m, run in default_runs.items():
        for n in (1, 7, 50, 200):
            pts = run.points[:n]
            st_ = QuadratureState.from_points(gmm, kernel, pts, JITTER)
            u = mmd_squared(gmm, kernel, WeightedSampleSet.uniform(pts))
            assert run.records[n - 1].mmd_uniform == pytest.approx(np.sqrt(u), rel=1e-7, abs=1e-12)
            assert run.records[n - 1].mmd_bq == pytest.approx(np.sqrt(bq_variance(st_)), rel=1e-6, abs=1e-10)


def test_greedy_runs_are_deterministic(gmm, kernel, default_runs):
    pool = CandidatePool.draw(gmm, kernel, np.random.default_rng(0), 10000)
    for m in ("herding", "sbq"):
        again = run_selection(m, pool, 200, kernel, gmm)
        assert again.indices.tolist() == default_runs[m].indices.tolist()
        assert again.mmd_bq().tolist() == default_runs[m].mmd_bq().tolist()


def test_unknown_method(gmm, kernel):
    with pytest.raises(InputError):
        run_selection("mcmc", None, 5, kernel, gmm)
    with pytest.raises(InputError):
        run_selection("iid", None, 5, kernel, gmm)
    with pytest.raises(InputError):
        run_selection("sbq", None, 5, kernel, gmm)


def test_one_dimensional_target():
    p = GaussianMixture.from_arrays([0.3, 0.7], [[-1.0], [1.0]], [[[0.2]], [[0.5]]])
    k = RbfKernel(0.2)
    pool = CandidatePool(sample(p, np.random.default_rng(0), 500), k, p)
    run = run_selection("sbq", pool, 20, k, p)
    assert run.points.shape == (20, 1)
    assert np.all(np.diff(run.mmd_bq()) <= 1e-12)
