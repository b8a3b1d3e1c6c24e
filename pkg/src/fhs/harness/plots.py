"""Static SVG figures of fitted curves, densities and prior paths."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed hash salt keeps SVG ids stable across runs
plt.rcParams["svg.hashsalt"] = "fhs"


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_fit(path, grid, mean, lower, upper, truth=None, points=None, title=None, ylabel="f(x)"):
    """Posterior mean (solid), pointwise band (dashed), truth when known."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if points is not None:
        ax.scatter(points[0], points[1], s=4, c="0.7", lw=0)
    ax.plot(grid, mean, "k-", lw=1.5, label="posterior mean")
    ax.plot(grid, lower, "k--", lw=0.8, label="credible band")
    ax.plot(grid, upper, "k--", lw=0.8)
    if truth is not None:
        ax.plot(grid, truth, "r-", lw=1.0, label="truth")
    ax.set_xlabel("x")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=7)
    return _save(fig, path)


def plot_components(path, grids, bands, means, keys, included, truths=None, max_panels=8):
    """Component curves of an additive fit, selected ones first."""
    idx = list(np.argsort(~np.asarray(included), kind="stable"))[:max_panels]
    cols = min(4, len(idx))
    rows = int(np.ceil(len(idx) / cols))
    fig, axes = plt.subplots(rows, cols, figsize=(3 * cols, 2.5 * rows), squeeze=False)
    for ax in axes.ravel()[len(idx):]:
        ax.set_visible(False)
    for ax, j in zip(axes.ravel(), idx):
        ax.plot(grids[j], means[j], "k-", lw=1.2)
        ax.plot(grids[j], bands[j][0], "k--", lw=0.7)
        ax.plot(grids[j], bands[j][1], "k--", lw=0.7)
        if truths is not None and truths[j] is not None:
            ax.plot(grids[j], truths[j], "r-", lw=0.8)
        ax.axhline(0.0, c="0.6", lw=0.5)
        ax.set_title(f"{keys[j]} ({'in' if included[j] else 'out'})", fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_paths(path, xs, paths, max_paths=20, title=None):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for p in np.asarray(paths)[:max_paths]:
        ax.plot(xs, p, lw=0.7)
    ax.set_xlabel("x")
    if title:
        ax.set_title(title)
    return _save(fig, path)
