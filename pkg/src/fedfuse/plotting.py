"""Matplotlib figures for evaluation reports."""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

APPROACH_COLORS = {
    "non-fused": "#4c72b0",
    "fused": "#dd8452",
    "fused+FT": "#55a868",
    "ensemble": "#c44e52",
}

_RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "svg.hashsalt": "fedfuse",
}


@contextmanager
def report_style():
    with matplotlib.rc_context(_RC):
        yield


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    # no Software/date metadata, so figures are reproducible byte for byte
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def best_per_approach_bars(summary, path) -> Path:
    """Grouped bars: best mean Macro F1 per approach for each test dataset.

    ``summary`` maps dataset -> list of (approach, mean, std or None).
    """
    datasets = list(summary)
    approaches = [a for a in APPROACH_COLORS if any(a == r[0] for rows in summary.values() for r in rows)]
    width = 0.8 / max(1, len(approaches))
    with report_style():
        fig, ax = plt.subplots(figsize=(max(4.0, 1.4 * len(datasets) + 1.5), 3.0))
        x = np.arange(len(datasets))
        for j, approach in enumerate(approaches):
            means, errs = [], []
            for d in datasets:
                hit = next((r for r in summary[d] if r[0] == approach), None)
                means.append(hit[1] if hit else np.nan)
                errs.append(hit[2] if hit and hit[2] is not None else 0.0)
            ax.bar(x + (j - (len(approaches) - 1) / 2) * width, means, width, yerr=errs,
                   label=approach, color=APPROACH_COLORS[approach], capsize=2, linewidth=0)
        ax.set_xticks(x)
        ax.set_xticklabels(datasets)
        ax.set_ylim(0, 1)
        ax.set_ylabel("Macro F1")
        ax.set_title("Best result per approach")
        if approaches:
            ax.legend(ncol=len(approaches), loc="upper center", bbox_to_anchor=(0.5, -0.15), frameon=False)
        return _save(fig, Path(path))


def score_heatmap(row_labels, col_labels, values, path, title="") -> Path:
    """Annotated heatmap of mean Macro F1 (NaN cells left blank)."""
    values = np.asarray(values, dtype=float).reshape(len(row_labels), len(col_labels))
    with report_style():
        fig, ax = plt.subplots(figsize=(1.1 * len(col_labels) + 2.5, 0.35 * len(row_labels) + 1.2))
        im = ax.imshow(np.ma.masked_invalid(values), vmin=0, vmax=1, cmap="viridis", aspect="auto")
        ax.set_xticks(range(len(col_labels)))
        ax.set_xticklabels(col_labels)
        ax.set_yticks(range(len(row_labels)))
        ax.set_yticklabels(row_labels)
        for (i, j), v in np.ndenumerate(values):
            if np.isfinite(v):
                ax.text(j, i, f"{v:.2f}", ha="center", va="center", fontsize=7,
                        color="white" if v < 0.6 else "black")
        ax.set_xlabel("test dataset")
        if title:
            ax.set_title(title)
        fig.colorbar(im, ax=ax, fraction=0.04, pad=0.02, label="Macro F1")
        return _save(fig, Path(path))
