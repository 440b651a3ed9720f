"""Experiment drivers behind the command-line interface.

Every driver takes an :class:`~herdquad.config.ExperimentConfig`, writes a
CSV with the shared schema :data:`CSV_HEADER` into the output directory and
renders the matching figure next to it.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from . import linalg, plotting
from .config import ExperimentConfig
from .errors import ConfigError, InputError, NumericalError
from .gmm import sample
from .objectives import QuadratureState, WeightedSampleSet, mmd_squared
from .selectors import CandidatePool, SelectionRun, run_selection
from .testfns import draw_functions, eval_function, exact_integral, load_functions, save_functions

log = logging.getLogger(__name__)

CSV_HEADER = (
    "method", "seed", "n", "mmd_uniform", "mmd_bq", "weight_sum", "weight_min",
    "weight_max", "mean_abs_err", "bound", "wall_millis",
)

# independent streams derived from each top-level seed
_POOL_STREAM, _IID_STREAM, _FUNCTION_STREAM, _BENCH_STREAM = 0, 1, 2, 3


def stream(seed: int, which: int) -> np.random.Generator:
    return np.random.default_rng([seed, which])


@dataclass(frozen=True)
class ErrorSummary:
    """Per-prefix absolute errors of one run over a set of test functions.

    ``abs_err`` has shape ``(num_functions, N)``; ``bound[n - 1]`` is the
    MMD of the weights the estimator used at prefix ``n``.
    """

    abs_err: np.ndarray
    bound: np.ndarray


def run_methods(cfg: ExperimentConfig, seed: int, methods=None) -> dict:
    """All requested methods on the candidate pool of ``seed``; keyed by method."""
    methods = cfg.methods if methods is None else methods
    k, p = cfg.kernel, cfg.gmm
    pool = None
    if any(m != "iid" for m in methods):
        pool = CandidatePool.draw(p, k, stream(seed, _POOL_STREAM), cfg.pool_size)
    runs = {}
    for m in methods:
        runs[m] = run_selection(m, pool, cfg.max_samples, k, p, rng=stream(seed, _IID_STREAM), jitter=cfg.jitter)
    return runs


def run_all(cfg: ExperimentConfig, threads: int = 1, methods=None) -> dict:
    """``{(method, seed): SelectionRun}`` over every configured seed."""
    def job(seed):
        return seed, run_methods(cfg, seed, methods)

    if threads > 1 and len(cfg.seeds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(job, cfg.seeds))
    else:
        results = [job(s) for s in cfg.seeds]
    return {(m, seed): run for seed, runs in results for m, run in runs.items()}


def integration_errors(run: SelectionRun, functions, gmm) -> ErrorSummary:
    """Absolute integration error of every prefix estimator of ``run``."""
    Z = np.array([exact_integral(f, gmm) for f in functions])
    F = np.stack([eval_function(f, run.points) for f in functions])  # (num_functions, N)
    N = len(run)
    err = np.empty((len(functions), N))
    bound = np.empty(N)
    for n in range(1, N + 1):
        w = run.estimator_weights(n)
        err[:, n - 1] = np.abs(Z - F[:, :n] @ w)
        rec = run.records[n - 1]
        bound[n - 1] = rec.mmd_bq if run.method in ("sbq", "herding-bq-reweight") else rec.mmd_uniform
    return ErrorSummary(err, bound)


# CSV ---------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def run_rows(run: SelectionRun, seed: int, errors: ErrorSummary | None = None, timing: bool = False) -> list:
    rows = []
    for r in run.records:
        rows.append({
            "method": run.method,
            "seed": seed,
            "n": r.n,
            "mmd_uniform": r.mmd_uniform,
            "mmd_bq": r.mmd_bq,
            "weight_sum": r.weight_sum,
            "weight_min": r.weight_min,
            "weight_max": r.weight_max,
            "mean_abs_err": None if errors is None else float(errors.abs_err[:, r.n - 1].mean()),
            "bound": None if errors is None else float(errors.bound[r.n - 1]),
            "wall_millis": r.wall_millis if timing else None,
        })
    return rows


def write_csv(rows: list, path) -> Path:
    path = Path(path)
    rows = sorted(rows, key=lambda r: (r["method"], r["seed"], r["n"]))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r["method"], _fmt(r["seed"]), _fmt(r["n"])] + [_fmt(r[c]) for c in CSV_HEADER[3:]])
    return path


def read_csv(path) -> list:
    """Parse a results CSV; numeric columns become floats (``None`` if empty)."""
    try:
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != CSV_HEADER:
                raise InputError(f"{path}: unexpected header {','.join(header)}")
            rows = []
            for lineno, fields in enumerate(reader, start=2):
                if len(fields) != len(CSV_HEADER):
                    raise InputError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(fields)}")
                row = {"method": fields[0], "seed": int(fields[1]), "n": int(fields[2])}
                for name, val in zip(CSV_HEADER[3:], fields[3:]):
                    row[name] = float(val) if val != "" else None
                rows.append(row)
    except StopIteration:
        raise InputError(f"{path}: empty file") from None
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"{path}: malformed value: {exc}") from exc
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return rows


def write_trajectories(cfg: ExperimentConfig, runs: dict, path, extra: dict | None = None) -> Path:
    data = {
        "config": cfg.to_dict(),
        "runs": [
            {
                "method": m,
                "seed": seed,
                "indices": None if run.indices is None else run.indices.tolist(),
                "points": run.points.tolist(),
            }
            for (m, seed), run in sorted(runs.items())
        ],
    }
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data) + "\n")
    return Path(path)


# commands ----------------------------------------------------------------

def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_mmd_curve(cfg: ExperimentConfig, threads: int = 1) -> Path:
    """MMD against N for every method and seed (``mmd_curve.csv``)."""
    out = _outdir(cfg)
    runs = run_all(cfg, threads)
    rows = [r for (m, seed), run in runs.items() for r in run_rows(run, seed, timing=cfg.record_timing)]
    path = write_csv(rows, out / "mmd_curve.csv")
    write_trajectories(cfg, runs, out / "mmd_curve_trajectories.json", {"csv": path.name, "functions": None})
    plotting.plot_curves(read_csv(path), out / "mmd_curve.svg")
    seed = cfg.seeds[0]
    if ("herding", seed) in runs and ("sbq", seed) in runs:
        plotting.plot_samples(cfg.gmm, runs[("herding", seed)], runs[("sbq", seed)], out / "samples.svg")
    return path


def cmd_error_curve(cfg: ExperimentConfig, threads: int = 1) -> Path:
    """Mean absolute integration error against N (``error_curve.csv``)."""
    if cfg.function_family == "none":
        raise ConfigError("error-curve needs function_family 'rkhs' or 'bumps'")
    out = _outdir(cfg)
    runs = run_all(cfg, threads)
    rows = []
    function_files = {}
    for seed in cfg.seeds:
        functions = draw_functions(cfg.function_family, stream(seed, _FUNCTION_STREAM), cfg.kernel, cfg.gmm, cfg.num_functions)
        fname = f"functions_seed{seed}.json"
        save_functions(functions, out / fname)
        function_files[str(seed)] = fname
        for m in cfg.methods:
            run = runs[(m, seed)]
            rows.extend(run_rows(run, seed, integration_errors(run, functions, cfg.gmm), timing=cfg.record_timing))
    path = write_csv(rows, out / "error_curve.csv")
    write_trajectories(cfg, runs, out / "error_curve_trajectories.json", {"csv": path.name, "functions": function_files})
    plotting.plot_curves(read_csv(path), out / "error_curve.svg")
    return path


def cmd_weights(cfg: ExperimentConfig, threads: int = 1) -> Path:
    """BQ weight diagnostics along SBQ runs (``weights.csv`` plus summaries)."""
    if "sbq" not in cfg.methods:
        raise ConfigError("weights needs 'sbq' among the configured methods")
    out = _outdir(cfg)
    runs = run_all(cfg, threads, methods=("sbq",))
    rows = [r for (m, seed), run in runs.items() for r in run_rows(run, seed, timing=cfg.record_timing)]
    path = write_csv(rows, out / "weights.csv")
    with (out / "weights_summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("seed", "n", "weight_sum", "weight_min", "weight_max", "num_negative"))
        for (m, seed), run in sorted(runs.items()):
            for r in run.records:
                w.writerow((seed, r.n, _fmt(r.weight_sum), _fmt(r.weight_min), _fmt(r.weight_max), r.num_negative))
    for (m, seed), run in sorted(runs.items()):
        for n in cfg.weight_checkpoints:
            if n <= len(run):
                dump = {"seed": seed, "n": n, "points": run.points[:n].tolist(), "weights": run.weights[n - 1].tolist()}
                (out / f"weights_seed{seed}_n{n}.json").write_text(json.dumps(dump) + "\n")
    write_trajectories(cfg, runs, out / "weights_trajectories.json", {"csv": path.name, "functions": None})
    first = runs[("sbq", cfg.seeds[0])]
    plotting.plot_weight_sums(read_csv(path), out / "weight_sums.svg")
    n_show = max([n for n in cfg.weight_checkpoints if n <= len(first)], default=len(first))
    plotting.plot_weights(first.weights[n_show - 1], out / f"weights_n{n_show}.svg")
    return path


# benchmark ---------------------------------------------------------------

def _best_time(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_step_times(cfg: ExperimentConfig, seed: int | None = None) -> dict:
    """Seconds per selection step for each method at every ``cfg.bench.sizes``.

    The ``iid``, ``herding`` and ``sbq`` entries time one step under the
    cost model where each candidate's criterion is evaluated from scratch
    (O(1), O(n) and O(n^2) per candidate) from the kernel rows
    ``k(c, X)`` that the pool caches; the time covers a batch of
    ``cfg.bench.batch`` candidates and is normalized per candidate.
    ``sbq-blas`` is the same computation through a blocked triangular
    solve, whose efficiency grows with n and so hides part of the
    quadratic growth. The ``*-pool`` entries time one step of the cached
    pool selectors used for the actual experiments.
    """
    seed = cfg.seeds[0] if seed is None else seed
    k, p, jitter = cfg.kernel, cfg.gmm, cfg.jitter
    rng = stream(seed, _BENCH_STREAM)
    sizes = sorted(cfg.bench.sizes)
    B = cfg.bench.batch
    pool_size = max(cfg.pool_size, max(sizes) + B + 1)
    pool = CandidatePool.draw(p, k, rng, pool_size)
    cand = pool.points[-B:]
    z_cand = pool.embeddings[-B:]
    times = {m: [] for m in ("iid", "herding", "sbq", "sbq-blas", "herding-pool", "sbq-pool")}
    reps = cfg.bench.repeats

    for n in sizes:
        X = pool.points[:n]
        state = QuadratureState.from_points(p, k, X, jitter)
        L = state.chol.lower
        a = state.chol.forward(state.z)

        times["iid"].append(_best_time(lambda: sample(p, rng, B), reps) / B)

        G = k.gram(X, cand)  # cached pool kernel rows, shape (n, B)

        def herding_scores():
            return z_cand - G.sum(axis=0) / (n + 1)

        times["herding"].append(_best_time(herding_scores, reps) / B)

        def sbq_scores():
            V = forward_substitution(L, G)
            return (z_cand - a @ V) ** 2 / (1.0 + jitter - np.einsum("ij,ij->j", V, V))

        def sbq_scores_blas():
            V = solve_triangular(L, G, lower=True, check_finite=False)
            return (z_cand - a @ V) ** 2 / (1.0 + jitter - np.einsum("ij,ij->j", V, V))

        times["sbq"].append(_best_time(sbq_scores, reps) / B)
        times["sbq-blas"].append(_best_time(sbq_scores_blas, reps) / B)
        times["herding-pool"].append(_pool_step_time(k, p, pool.points[:cfg.pool_size], n, "herding", jitter, reps))
        times["sbq-pool"].append(_pool_step_time(k, p, pool.points[:cfg.pool_size], n, "sbq", jitter, reps))
    return {"sizes": sizes, "seconds": times}


def forward_substitution(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``L^{-1} B`` one row at a time, vectorized over the columns of ``B``."""
    V = np.empty_like(B)
    for i in range(L.shape[0]):
        V[i] = (B[i] - L[i, :i] @ V[:i]) / L[i, i]
    return V


def _pool_step_time(k, p, points, n, method, jitter, repeats) -> float:
    from .selectors import KernelHerding, SequentialBQ

    pool = CandidatePool(points, k, p)
    sel = KernelHerding(pool) if method == "herding" else SequentialBQ(pool, jitter, capacity=n + repeats + 1)
    for _ in range(n):
        sel.select(sel.step())
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        sel.select(sel.step())
        best = min(best, time.perf_counter() - t0)
    return best


def growth_exponent(sizes, seconds) -> float:
    """Least-squares slope of log time against log n."""
    return float(np.polyfit(np.log(sizes), np.log(seconds), 1)[0])


def cmd_bench(cfg: ExperimentConfig, threads: int = 1) -> Path:
    """Per-step wall time against n (``bench.csv``) and fitted exponents."""
    out = _outdir(cfg)
    res = bench_step_times(cfg)
    sizes = res["sizes"]
    seed = cfg.seeds[0]
    rows = []
    for method, secs in res["seconds"].items():
        for n, t in zip(sizes, secs):
            rows.append({c: None for c in CSV_HEADER} | {"method": method, "seed": seed, "n": n, "wall_millis": 1e3 * t})
    path = write_csv(rows, out / "bench.csv")
    with (out / "bench_exponents.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("method", "exponent", "ratio_last_first"))
        for method, secs in sorted(res["seconds"].items()):
            w.writerow((method, _fmt(growth_exponent(sizes, secs)), _fmt(secs[-1] / secs[0])))
    plotting.plot_bench(read_csv(path), out / "bench.svg")
    return path


# audit -------------------------------------------------------------------

def audit(trajectory_path, atol: float = 1e-8, rtol: float = 1e-6) -> int:
    """Recompute every value of a finished run's CSV from its trajectories.

    Returns the number of checked values; raises :class:`NumericalError`
    on the first mismatch.
    """
    trajectory_path = Path(trajectory_path)
    try:
        data = json.loads(trajectory_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read trajectories {trajectory_path}: {exc}") from exc
    cfg = ExperimentConfig.from_dict(data["config"], base_dir=trajectory_path.parent)
    base = trajectory_path.parent
    rows = {(r["method"], r["seed"], r["n"]): r for r in read_csv(base / data["csv"])}
    functions = {int(s): load_functions(base / f) for s, f in (data.get("functions") or {}).items()}
    k, p = cfg.kernel, cfg.gmm
    checked = 0

    def check(name, got, want, key):
        nonlocal checked
        if got is None:
            return
        if not abs(got - want) <= atol + rtol * abs(want):
            raise NumericalError(f"audit mismatch in {name} at {key}: csv {got!r}, recomputed {want!r}")
        checked += 1

    for entry in data["runs"]:
        method, seed = entry["method"], entry["seed"]
        pts = np.asarray(entry["points"], dtype=float)
        fs = functions.get(seed)
        if fs is not None:
            Z = np.array([exact_integral(f, p) for f in fs])
            F = np.stack([eval_function(f, pts) for f in fs])
        for n in range(1, len(pts) + 1):
            key = (method, seed, n)
            row = rows.get(key)
            if row is None:
                raise NumericalError(f"audit: no CSV row for {key}")
            state = QuadratureState.from_points(p, k, pts[:n], cfg.jitter)
            w_bq = linalg.solve(state.chol, state.z)
            w_u = np.full(n, 1.0 / n)
            mmd_u = np.sqrt(mmd_squared(p, k, WeightedSampleSet(pts[:n], w_u)))
            mmd_b = np.sqrt(max(state.initial_variance - float(state.z @ w_bq), 0.0))
            check("mmd_uniform", row["mmd_uniform"], mmd_u, key)
            check("mmd_bq", row["mmd_bq"], mmd_b, key)
            check("weight_sum", row["weight_sum"], float(w_bq.sum()), key)
            check("weight_min", row["weight_min"], float(w_bq.min()), key)
            check("weight_max", row["weight_max"], float(w_bq.max()), key)
            if fs is not None:
                bq = method in ("sbq", "herding-bq-reweight")
                w = w_bq if bq else w_u
                check("mean_abs_err", row["mean_abs_err"], float(np.mean(np.abs(Z - F[:, :n] @ w))), key)
                check("bound", row["bound"], mmd_b if bq else mmd_u, key)
    return checked
