"""Figures written next to the run log and the surface sweep."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def plot_run(entries, path, title=None):
    """Three stacked panels: mixture weight, mean tokens, accuracy vs. step."""
    steps = [e["step"] for e in entries]
    a1 = [e["alpha"][0] for e in entries]
    tok = [e["report"]["mean_tokens"] for e in entries]
    acc = [e["report"]["mean_accuracy"] for e in entries]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(5.0, 6.0), sharex=True)
        axes[0].step(steps, a1, where="post", color="C0", label="system-1")
        axes[0].step(steps, [1 - x for x in a1], where="post", color="C1", label="system-2")
        axes[0].set_ylabel("mixture weight")
        axes[0].set_ylim(-0.02, 1.02)
        axes[0].legend(frameon=False, loc="best")
        axes[1].plot(steps, tok, "-", color="C2")
        axes[1].set_ylabel("mean tokens")
        axes[2].plot(steps, acc, "-", color="C3")
        axes[2].set_ylabel("accuracy")
        axes[2].set_xlabel("training step")
        if title:
            axes[0].set_title(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def plot_surface(rows, path):
    """Token and accuracy heatmaps over the (System-1, System-2) exposure grid."""
    arr = np.asarray(rows, dtype=float)
    e1 = np.unique(arr[:, 0])
    e2 = np.unique(arr[:, 1])
    tok = arr[:, 2].reshape(len(e1), len(e2))
    acc = arr[:, 3].reshape(len(e1), len(e2))
    extent = (e2[0], e2[-1], e1[0], e1[-1])
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.4))
        for ax, grid, label, cmap in ((axes[0], tok, "mean tokens", "viridis"), (axes[1], acc, "accuracy", "magma")):
            im = ax.imshow(grid, origin="lower", extent=extent, aspect="auto", cmap=cmap)
            ax.set_xlabel("system-2 exposure")
            ax.set_ylabel("system-1 exposure")
            fig.colorbar(im, ax=ax, label=label)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)
