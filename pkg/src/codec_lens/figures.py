"""Matplotlib summary figures written next to the JSON/CSV reports."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import SeparabilityReport, SimilarityReport
from .entropy import ChannelRateReport
from .util import atomic_write

__all__ = ["rates_figure", "separability_figure", "similarity_figure"]


def _save(fig, path: str) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120)
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def rates_figure(report: ChannelRateReport, path: str) -> None:
    """Bar chart of per-channel bpp in descending-rate order."""
    ordered = [float(report.bpp[i]) for i in report.ranks]
    fig, ax = plt.subplots(figsize=(max(6, 0.09 * len(ordered)), 3.2))
    ax.bar(np.arange(len(ordered)), ordered, width=0.9, color="#33557a")
    ax.set_xlabel("channel (sorted by rate)")
    ax.set_ylabel("bits per pixel")
    ax.set_title(f"per-channel rate, total {report.total_bpp:.3f} bpp")
    fig.tight_layout()
    _save(fig, path)


def separability_figure(report: SeparabilityReport, path: str) -> None:
    """Per-latent channel/spatial MSE bars plus the pooled means."""
    fig, ax = plt.subplots(figsize=(6.4, 3.2))
    n_c = len(report.per_latent_channel)
    ax.bar(
        np.arange(n_c) - 0.2, report.per_latent_channel, width=0.4,
        label="channel", color="#33557a",
    )
    if report.per_latent_spatial:
        ax.bar(
            np.arange(len(report.per_latent_spatial)) + 0.2,
            report.per_latent_spatial, width=0.4, label="spatial", color="#b3552a",
        )
    ax.axhline(report.mse_channel, color="#33557a", ls="--", lw=0.8)
    ax.set_xlabel("latent index")
    ax.set_ylabel("MSE vs joint decode")
    ax.set_title(
        f"separability: channel {report.mse_channel:.2e}, spatial {report.mse_spatial:.2e}"
    )
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def similarity_figure(report: SimilarityReport, path: str) -> None:
    """Heatmap of the similarity matrix with the chosen assignment marked."""
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    im = ax.imshow(report.matrix, vmin=0.0, vmax=1.0, cmap="magma", aspect="auto")
    xs = [c for _, c, _ in report.pairs]
    ys = [r for r, _, _ in report.pairs]
    ax.scatter(xs, ys, s=12, c="#4dd2ff", marker="s", label="assignment")
    ax.set_xlabel("reference basis index")
    ax.set_ylabel("basis index")
    ax.set_title(f"|cosine| similarity, mean assigned {report.mean_score:.4f}")
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.legend(loc="upper right")
    fig.tight_layout()
    _save(fig, path)
