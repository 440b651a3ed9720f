"""Matplotlib figures written next to the CSV outputs."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .gmm import density  # noqa: E402

STYLE = {
    "figure.figsize": (5.5, 4.0),
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.5,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "herdquad",
    "svg.fonttype": "none",
}

COLORS = {"iid": "tab:gray", "herding": "tab:blue", "herding-bq-reweight": "tab:green", "sbq": "tab:red"}
LABELS = {"iid": "i.i.d. MC", "herding": "herding", "herding-bq-reweight": "herding + BQ weights", "sbq": "SBQ"}
# column plotted for each method on MMD figures: the weights its estimator uses
HEADLINE = {"iid": "mmd_uniform", "herding": "mmd_uniform", "herding-bq-reweight": "mmd_bq", "sbq": "mmd_bq"}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format=path.suffix.lstrip(".") or "svg", metadata={"Date": None} if path.suffix == ".svg" else None)
    plt.close(fig)
    return path


def _mean_by_n(rows, method, column):
    acc = defaultdict(list)
    for r in rows:
        if r["method"] == method and r[column] is not None:
            acc[r["n"]].append(r[column])
    ns = np.array(sorted(acc))
    return ns, np.array([np.mean(acc[n]) for n in ns])


def plot_curves(rows, path) -> Path:
    """Log-log curve per method, averaged over seeds.

    Error CSVs (``mean_abs_err`` filled) plot the error with the SBQ bound
    dashed; otherwise each method's MMD is shown.
    """
    methods = sorted({r["method"] for r in rows})
    errors = any(r["mean_abs_err"] is not None for r in rows)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for m in methods:
            column = "mean_abs_err" if errors else HEADLINE.get(m, "mmd_uniform")
            ns, ys = _mean_by_n(rows, m, column)
            if len(ns) == 0:
                continue
            ax.loglog(ns, ys, color=COLORS.get(m), label=LABELS.get(m, m))
            if errors and m == "sbq":
                nb, yb = _mean_by_n(rows, m, "bound")
                ax.loglog(nb, yb, color=COLORS[m], ls="--", label="SBQ bound (MMD)")
        ax.set_xlabel("number of samples")
        ax.set_ylabel("mean absolute error" if errors else "MMD")
        ax.legend()
        fig.tight_layout()
        return _save(fig, path)


def plot_samples(gmm, herding_run, sbq_run, path, n_herding: int = 20, n_sbq: int = 8) -> Path:
    """Density contours with the first herding samples and weighted SBQ samples."""
    lo, hi = gmm.bounding_box(2.5)
    xs = np.linspace(lo[0], hi[0], 200)
    ys = np.linspace(lo[1], hi[1], 200)
    gx, gy = np.meshgrid(xs, ys)
    dens = density(gmm, np.column_stack([gx.ravel(), gy.ravel()])).reshape(gx.shape)
    hp = herding_run.points[:n_herding]
    n_sbq = min(n_sbq, len(sbq_run))
    sp = sbq_run.points[:n_sbq]
    w = sbq_run.weights[n_sbq - 1]
    with plt.rc_context(STYLE | {"axes.grid": False}):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.contour(gx, gy, dens, levels=8, colors="0.6", linewidths=0.7)
        ax.scatter(hp[:, 0], hp[:, 1], s=18, marker="x", color=COLORS["herding"], label=f"herding ({len(hp)})")
        sizes = 400 * np.abs(w) / np.max(np.abs(w))
        ax.scatter(sp[:, 0], sp[:, 1], s=sizes, facecolors="none", edgecolors=COLORS["sbq"], label=f"SBQ ({n_sbq})")
        ax.set_aspect("equal")
        ax.legend(loc="upper right")
        fig.tight_layout()
        return _save(fig, path)


def plot_weights(weights, path) -> Path:
    """Stem plot of one BQ weight vector against the uniform weight."""
    weights = np.asarray(weights)
    n = len(weights)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.stem(np.arange(1, n + 1), weights, basefmt=" ")
        ax.axhline(1.0 / n, color="k", ls="--", lw=0.8, label="uniform 1/N")
        ax.axhline(0.0, color="k", lw=0.5)
        ax.set_xlabel("sample index")
        ax.set_ylabel("BQ weight")
        ax.set_title(f"N = {n}, sum = {weights.sum():.3f}")
        ax.legend()
        fig.tight_layout()
        return _save(fig, path)


def plot_weight_sums(rows, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for seed in sorted({r["seed"] for r in rows}):
            sub = sorted((r for r in rows if r["seed"] == seed), key=lambda r: r["n"])
            ax.semilogx([r["n"] for r in sub], [r["weight_sum"] for r in sub], color=COLORS["sbq"], alpha=0.7)
        ax.axhline(1.0, color="k", ls="--", lw=0.8)
        ax.set_xlabel("number of samples")
        ax.set_ylabel("sum of BQ weights")
        fig.tight_layout()
        return _save(fig, path)


def plot_bench(rows, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for m in sorted({r["method"] for r in rows}):
            ns, ts = _mean_by_n(rows, m, "wall_millis")
            ax.loglog(ns, ts, marker="o", ls="--" if m.endswith("-pool") else "-",
                      color=COLORS.get(m.removesuffix("-pool")), label=m)
        ax.set_xlabel("n (samples already selected)")
        ax.set_ylabel("milliseconds per step")
        ax.legend()
        fig.tight_layout()
        return _save(fig, path)
