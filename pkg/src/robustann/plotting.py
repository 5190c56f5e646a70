"""Figures for the bench report, rendered to PNG with the Agg backend."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.2),
    "figure.dpi": 100,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "savefig.bbox": "tight",
}


def _save(fig, path: Path) -> Path:
    fig.savefig(path)
    plt.close(fig)
    return path


def latency_histogram(latencies_ms: Sequence[float], path, title: str = "query latency") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.hist(latencies_ms, bins=min(30, max(5, len(latencies_ms) // 3)), color="0.35")
        ax.set_xlabel("latency (ms)")
        ax.set_ylabel("queries")
        ax.set_title(title)
        return _save(fig, Path(path))


def ratio_plot(ratios: Sequence[float], path, bound: float | None = None) -> Path:
    """Per-query ratio of returned to optimal distance, with an optional bound line."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(range(len(ratios)), ratios, ".", color="C0", ms=4)
        if bound is not None:
            ax.axhline(bound, color="C3", lw=0.8, ls="--", label=f"bound {bound:g}")
            ax.legend(frameon=False, fontsize=8)
        ax.set_xlabel("query")
        ax.set_ylabel("distance ratio")
        return _save(fig, Path(path))


def stopping_levels(levels: Sequence[int], n_levels: int, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        counts = [sum(1 for v in levels if v == i) for i in range(1, n_levels + 1)]
        ax.bar(range(1, n_levels + 1), counts, color="0.35")
        ax.set_xticks(range(1, n_levels + 1))
        ax.set_xlabel("stopping level")
        ax.set_ylabel("queries")
        return _save(fig, Path(path))
