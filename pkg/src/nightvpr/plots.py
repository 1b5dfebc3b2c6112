"""Matplotlib figures written next to the CSV reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "nightvpr",
}

# no Software/date chunks, so repeated runs give byte-identical files
PNG_METADATA = {"Software": None}


def figsize(scale=1.0, ratio=None):
    if ratio is None:
        ratio = (np.sqrt(5.0) - 1.0) / 2.0
    width = 5.0 * scale
    return (width, width * ratio)


def _save(fig, path):
    fig.savefig(path, dpi=120, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def error_boxplot(groups, path, xlabel, title=None):
    """Box plot of distance errors, one box per ``label -> errors`` entry."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        labels = list(groups)
        ax.boxplot([np.asarray(groups[k], dtype=float) for k in labels], whis=(0, 100))
        ax.set_xticks(range(1, len(labels) + 1))
        ax.set_xticklabels([str(k) for k in labels])
        ax.set_xlabel(xlabel)
        ax.set_ylabel("distance error (m)")
        if title:
            ax.set_title(title)
        ax.grid(axis="y", alpha=0.3)
        fig.tight_layout()
        return _save(fig, path)


def heatmap_figure(hm, ref_map, path, node_scores=None, truth=None, estimate=None, matched=None):
    """Heat map with reference nodes, ground truth, estimate and matched node."""
    spec = hm.spec
    extent = (spec.origin[0], spec.origin[0] + spec.cols * spec.cell_size_x,
              spec.origin[1], spec.origin[1] + spec.rows * spec.cell_size_y)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(ratio=0.75))
        im = ax.imshow(hm.values, origin="lower", extent=extent, cmap="inferno", aspect="equal")
        fig.colorbar(im, ax=ax, label="similarity")
        pos = ref_map.positions
        if node_scores is not None:
            s = np.asarray(node_scores, dtype=float)
            span = s.max() - s.min()
            sizes = 10 + 80 * ((s - s.min()) / span if span > 0 else np.ones_like(s))
        else:
            sizes = 20
        ax.scatter(pos[:, 0], pos[:, 1], s=sizes, facecolors="none", edgecolors="limegreen", linewidths=1)
        if truth is not None:
            ax.plot(*truth, "r+", markersize=10, mew=2, label="truth")
        if matched is not None:
            ax.plot(*matched, "g+", markersize=10, mew=2, label="closest node")
        if estimate is not None:
            ax.plot(*estimate, "k+", markersize=10, mew=2, label="estimate")
        if truth is not None or estimate is not None:
            ax.legend(loc="upper right", framealpha=0.8)
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
        fig.tight_layout()
        return _save(fig, path)
