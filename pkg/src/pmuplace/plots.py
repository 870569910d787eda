"""Score-curve and placement-trajectory figures.

Rendering is file-only (Agg backend) and deterministic: fixed geometry,
fixed dpi, and pinned PNG metadata so identical inputs produce identical
image bytes.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .placement import PlacementResult

_PNG_META = {"Software": "pmuplace"}


def save_curve_figure(path: str | Path, result: PlacementResult, scorer: str) -> None:
    """Score versus PMU count with the recommended count highlighted."""
    counts = list(range(1, len(result.trajectory) + 1))
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(counts, result.trajectory, marker="o", color="#1f6fb4", label=scorer)
    k = result.recommended_count
    ax.axvline(k, color="#b44a1f", linestyle="--", linewidth=1.0)
    ax.plot([k], [result.trajectory[k - 1]], marker="o", markersize=9,
            markerfacecolor="none", markeredgecolor="#b44a1f", linestyle="none",
            label=f"recommended = {k}")
    ax.set_xlabel("PMU count")
    ax.set_ylabel("score")
    ax.set_xticks(counts)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def save_trajectory_figure(path: str | Path, result: PlacementResult, scorer: str) -> None:
    """Selection trajectory labeled with the bus added at each step."""
    counts = list(range(1, len(result.trajectory) + 1))
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(counts, result.trajectory, marker="o", color="#2a7f4f")
    for k, bus in zip(counts, result.selected):
        ax.annotate(bus, (k, result.trajectory[k - 1]),
                    textcoords="offset points", xytext=(0, 7),
                    ha="center", fontsize=8)
    ax.set_xlabel("PMU count")
    ax.set_ylabel("score")
    ax.set_title(f"scorer: {scorer}, refinements: {len(result.refinements)}")
    ax.set_xticks(counts)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
