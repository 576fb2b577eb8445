"""Report figures.  Everything is written as SVG with fixed hash salt and no
date stamp so identical runs produce identical files."""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "ringcap",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _figure(width=4.5, ratio=0.7):
    plt.rcParams.update(STYLE)
    return plt.subplots(figsize=(width, width * ratio))


def save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def domain_outline(ax, domain, color="0.3"):
    if domain.boundary is not None and domain.dim == 2:
        v, s = domain.boundary(512)
        for a, b in s:
            ax.plot(*np.column_stack([v[a], v[b]]), color=color, lw=0.8)
    else:
        lo, hi = domain.lo, domain.hi
        ax.plot([lo[0], hi[0], hi[0], lo[0], lo[0]], [lo[1], lo[1], hi[1], hi[1], lo[1]],
                color=color, lw=0.8)


def plot_convergence(series: dict, path):
    """series: label -> (res list, relative error list)."""
    fig, ax = _figure()
    for label, (res, err) in sorted(series.items()):
        ax.loglog(res, np.abs(err), "o-", label=label)
    ax.set_xlabel("cells across G")
    ax.set_ylabel("relative error vs radial oracle")
    ax.legend(frameon=False)
    save(fig, path)


def plot_ring_ratios(records, constant, path, tol=0.0):
    recs = [r for r in records if r.skipped is None]
    fig, ax = _figure()
    ax.plot(range(len(recs)), [r.ratio for r in recs], "o", label="capacity ratio")
    ax.axhline(constant, color="C3", lw=1, label="distortion constant")
    if tol:
        ax.axhline(constant * (1 + tol), color="C3", lw=0.6, ls="--")
    ax.set_xticks(range(len(recs)))
    ax.set_xticklabels([r.id for r in recs], rotation=60, fontsize=6)
    ax.set_ylabel("lhs / rhs")
    ax.legend(frameon=False)
    save(fig, path)


def plot_metric_curves(domain, results, path):
    fig, ax = _figure(4.0, 1.0)
    domain_outline(ax, domain)
    for r in results:
        c = np.asarray(r.best_curve)
        ax.plot(c[:, 0], c[:, 1], "-", lw=1)
        ax.plot(c[[0, -1], 0], c[[0, -1], 1], "k.", ms=4)
    ax.set_aspect("equal")
    ax.set_title(f"best curves, p = {results[0].p:g}" if results else "")
    save(fig, path)


def plot_partition(partition, values, path):
    fig, ax = _figure(4.0, 0.9)
    vmax = max(values) if values else 1.0
    cmap = plt.get_cmap("viridis")
    for A, v in zip(partition, values):
        lo, hi = A.lo, A.hi
        ax.add_patch(plt.Rectangle(lo, *(hi - lo), color=cmap(v / vmax if vmax else 0.0)))
        ax.text(*((lo + hi) / 2), f"{v:.3g}", ha="center", va="center", fontsize=6,
                color="w")
    lo = np.min([A.lo for A in partition], axis=0)
    hi = np.max([A.hi for A in partition], axis=0)
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")
    ax.set_title("set function estimate per box")
    save(fig, path)


def plot_sequence(x, y, path, xlabel, ylabel, logx=False):
    fig, ax = _figure()
    ax.plot(x, y, "o-")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if all(math.isfinite(v) for v in y) and len(y):
        ax.set_ylim(0, max(y) * 1.15)
    save(fig, path)
