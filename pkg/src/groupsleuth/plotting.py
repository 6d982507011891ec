"""Report figures rendered to PNG with the non-interactive backend."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 100,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
    # fixed metadata keeps the PNG bytes stable across runs
    "savefig.dpi": 100,
}
COLORS = {"genuine": "#3b7dd8", "fraud": "#d8583b"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def interactions_figure(rows: Sequence[tuple[int, int, int]], path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        w = np.array([r[0] for r in rows])
        ax.plot(w, [r[1] for r in rows], "o-", color=COLORS["genuine"], label="genuine in fraud groups")
        ax.plot(w, [r[2] for r in rows], "s-", color=COLORS["fraud"], label="fraudsters in genuine groups")
        ax.set_xlabel("time window")
        ax.set_ylabel("interactions")
        ax.legend()
        return _save(fig, path)


def metrics_figure(names: Sequence[str], rows: Sequence[tuple[float, float, float]], path,
                   title: str = "") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = np.arange(len(names))
        for k, (label, shade) in enumerate(zip(("precision", "recall", "F1"), (0.35, 0.6, 0.9))):
            ax.bar(x + (k - 1) * 0.26, [r[k] for r in rows], 0.26, label=label, color=plt.cm.Greys(shade))
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=15, ha="right")
        ax.set_ylim(0, 1.05)
        ax.set_title(title)
        ax.legend(ncol=3, loc="lower right")
        return _save(fig, path)


def pca_figure(panels: Sequence[tuple[str, np.ndarray, np.ndarray]], path) -> Path:
    """One scatter per ``(title, points n x 2, labels)`` panel."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(panels), figsize=(3.2 * len(panels), 3.2), squeeze=False)
        for ax, (title, pts, labels) in zip(axes[0], panels):
            for lab, name in ((0, "genuine"), (1, "fraud")):
                sel = np.asarray(labels) == lab
                ax.scatter(pts[sel, 0], pts[sel, 1], s=10, alpha=0.7, color=COLORS[name], label=name)
            ax.set_title(title)
            ax.set_xlabel("PC1")
            ax.set_ylabel("PC2")
        axes[0][0].legend()
        return _save(fig, path)
