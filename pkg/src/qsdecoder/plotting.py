"""Figures for CLI reports, drawn with the object-oriented matplotlib API (Agg)."""

from __future__ import annotations

import os
import tempfile
from collections import defaultdict
from pathlib import Path

import numpy as np
from matplotlib import colormaps
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

GRID_ALPHA = 0.3
# dropping timestamps keeps repeated renders byte-identical
_STABLE_METADATA = {
    "png": {"Software": None},
    "svg": {"Date": None},
    "pdf": {"CreationDate": None, "ModDate": None},
}


def _new_figure(ncols: int = 1) -> tuple[Figure, list]:
    fig = Figure(figsize=(5.5 * ncols, 4.0), layout="constrained")
    FigureCanvasAgg(fig)
    axes = [fig.add_subplot(1, ncols, i + 1) for i in range(ncols)]
    for ax in axes:
        ax.grid(True, alpha=GRID_ALPHA)
    return fig, axes


def save_figure(fig: Figure, path: str | Path) -> None:
    """Write atomically; the format follows the file extension."""
    path = Path(path)
    fmt = path.suffix.lstrip(".") or "png"
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=path.suffix)
    os.close(fd)
    try:
        fig.savefig(tmp, format=fmt, metadata=_STABLE_METADATA.get(fmt))
        mask = os.umask(0)
        os.umask(mask)
        os.chmod(tmp, 0o666 & ~mask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def plot_curves(rows, path) -> None:
    """f(R, k) against k, one line per R."""
    by_r = defaultdict(list)
    for R, k, f in rows:
        by_r[R].append((k, f))
    fig, (ax,) = _new_figure()
    colors = _ramp(len(by_r))
    for color, R in zip(colors, sorted(by_r, reverse=True)):
        k, f = np.array(by_r[R]).T
        ax.plot(k, f, color=color, label=f"R={R}")
    ax.axhline(0.5, color="0.4", ls="--", lw=0.8)
    ax.set_xlabel("power-law exponent k")
    ax.set_ylabel("runtime exponent f(R, k)")
    ax.legend(fontsize=7, ncols=2)
    save_figure(fig, path)


def plot_runtime(rows, path) -> None:
    """log10 query counts against n, plus the ratio of the full bound to the continuous rt1."""
    by_k = defaultdict(list)
    for r in rows:
        by_k[(r["R"], r["k"])].append(r)
    fig, (ax, ax2) = _new_figure(2)
    for color, key in zip(_ramp(len(by_k)), sorted(by_k)):
        rs = sorted(by_k[key], key=lambda r: r["n"])
        n = [r["n"] for r in rs]
        ax.plot(n, [r["log10_rt1"] for r in rs], color=color, label=f"R={key[0]}, k={key[1]:g}")
        ax.plot(n, [r["log10_rt1_continuous"] for r in rs], color=color, ls=":")
        ax2.plot(n, [r["ratio"] for r in rs], color=color, label=f"k={key[1]:g}")
    ax.set_xlabel("sequence length n")
    ax.set_ylabel("log10 queries (solid: discrete, dotted: continuous)")
    ax.legend(fontsize=7)
    ax2.axhline(1.0, color="0.4", ls="--", lw=0.8)
    ax2.set_xlabel("sequence length n")
    ax2.set_ylabel("full bound / continuous rt1")
    save_figure(fig, path)


def plot_beam(rows, path) -> None:
    """log10 runtime and log10 retained hypotheses against n."""
    fig, (ax, ax2) = _new_figure(2)
    by_param = defaultdict(list)
    for r in rows:
        by_param[(r.R, r.k, r.mode, r.parameter)].append(r)
    for color, key in zip(_ramp(len(by_param)), sorted(by_param)):
        rs = sorted(by_param[key], key=lambda r: r.n)
        n = [r.n for r in rs]
        label = f"{key[2]} {key[3]:.3g}"
        ax.plot(n, [r.log10_runtime for r in rs], color=color, label=label)
        ax2.plot(n, [r.log10_N_hyp for r in rs], color=color, label=label)
    ax.set_xlabel("sequence length n")
    ax.set_ylabel("log10 search iterations")
    ax2.set_xlabel("sequence length n")
    ax2.set_ylabel("log10 retained hypotheses")
    ax.legend(fontsize=7)
    save_figure(fig, path)


def plot_trials(outcomes, N: int, overlap: float, path) -> None:
    """Histogram of queries until the optimum, with the sqrt(N) and 1/overlap scales."""
    fig, (ax,) = _new_figure()
    q = np.array([o.queries_to_max for o in outcomes], dtype=float)
    ax.hist(q, bins=min(50, max(5, len(q) // 10)), color="tab:blue", alpha=0.8)
    ax.axvline(np.sqrt(N), color="tab:red", ls="--", label="sqrt(N)")
    if overlap > 0:
        ax.axvline(1 / overlap, color="tab:green", ls=":", label="1/overlap")
    ax.axvline(q.mean(), color="k", lw=1, label="mean")
    ax.set_xlabel("oracle queries until the optimum is measured")
    ax.set_ylabel("trials")
    ax.legend(fontsize=8)
    save_figure(fig, path)


def plot_fit(profile, fit, path) -> None:
    """Rank-frequency profile on log-log axes with the fitted line over its range."""
    fig, (ax,) = _new_figure()
    ranks = np.arange(1, len(profile) + 1)
    positive = np.asarray(profile) > 0
    ax.loglog(ranks[positive], np.asarray(profile)[positive], "o", ms=4, label="mean probability")
    lo, hi = fit.rank_range
    r = np.arange(lo, hi + 1)
    ax.loglog(r, fit.a * r ** (-fit.b), "-", color="tab:red", label=f"{fit.a:.3g} r^-{fit.b:.3f}")
    ax.set_xlabel("rank")
    ax.set_ylabel("probability")
    ax.legend(fontsize=8)
    save_figure(fig, path)


def plot_counts(labels, counts, path, xlabel: str = "outcome") -> None:
    """Bar chart of the most frequent sampled outcomes."""
    fig, (ax,) = _new_figure()
    ax.bar(range(len(counts)), counts, color="tab:blue")
    ax.set_xticks(range(len(labels)), labels, rotation=60, fontsize=6, ha="right")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    save_figure(fig, path)


def _ramp(count: int):
    cmap = colormaps["viridis"]
    return [cmap(x) for x in np.linspace(0.05, 0.9, max(count, 1))]
