"""Figure rendering for the CLI report paths (headless matplotlib)."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _curve_figure(
    ranks: Sequence[int],
    curves: Mapping[str, Sequence[float]],
    ylabel: str,
    title: str,
):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, ys in curves.items():
        ax.plot(ranks, ys, marker=".", markersize=3, label=label)
    ax.set_xlabel("rank")
    ax.set_ylabel(ylabel)
    ax.set_ylim(0.0, 1.02)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def save_precision_curves(
    path: str | Path, ranks: Sequence[int], curves: Mapping[str, Sequence[float]]
) -> None:
    fig = _curve_figure(ranks, curves, "mean precision", "Attribute search: mean precision")
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_recall_curves(
    path: str | Path, ranks: Sequence[int], curves: Mapping[str, Sequence[float]]
) -> None:
    fig = _curve_figure(ranks, curves, "mean recall", "Analogy answering: mean recall")
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_cluster_summary(
    path: str | Path, sizes: Sequence[int], purities: Sequence[float] | None = None
) -> None:
    """Bar chart of kept cluster sizes, colored by purity when available."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    x = range(1, len(sizes) + 1)
    if purities is not None and len(purities) == len(sizes):
        ax.bar(x, sizes, color=plt.cm.viridis(list(purities)))
        fig.colorbar(
            plt.cm.ScalarMappable(cmap="viridis", norm=plt.Normalize(0, 1)),
            ax=ax,
            label="purity",
        )
    else:
        ax.bar(x, sizes)
    ax.set_xlabel("cluster")
    ax.set_ylabel("size")
    ax.set_title("Discovered clusters")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
