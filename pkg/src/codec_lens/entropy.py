"""Empirical per-channel bit-rate estimation.

Latents are quantized (round-half-to-even), pooled over all images and
spatial positions into per-channel histograms, and scored with the
plug-in Shannon entropy. This stands in for a trained entropy model:
the absolute rates differ from coded rates, but the induced channel
ordering is what downstream consumers (basis sorting, figure labels)
need.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nn import AnalysisNet, run_analysis
from .tensor import Tensor3

__all__ = ["ChannelRateReport", "estimate_rates", "rank_channels"]


@dataclass
class ChannelRateReport:
    """Per-channel empirical rates and the induced descending-rate order."""

    entropy_bits: np.ndarray  # bits per coefficient, one per channel
    bpp: np.ndarray  # bits per image pixel contributed by the channel
    total_bpp: float
    ranks: list[int]  # channel indices sorted by descending rate
    downsampling: int

    @property
    def channels(self) -> int:
        return len(self.ranks)

    def rank_positions(self) -> list[int]:
        """positions[i] = rank of channel i (0 = highest rate)."""
        positions = [0] * self.channels
        for position, channel in enumerate(self.ranks):
            positions[channel] = position
        return positions

    def to_dict(self) -> dict:
        positions = self.rank_positions()
        return {
            "downsampling": self.downsampling,
            "total_bpp": self.total_bpp,
            "channels": [
                {
                    "channel": i,
                    "entropy_bits": float(self.entropy_bits[i]),
                    "bpp": float(self.bpp[i]),
                    "rank": positions[i],
                }
                for i in range(self.channels)
            ],
        }


def _entropy_bits(counter: Counter) -> float:
    total = sum(counter.values())
    # summing over count-sorted terms makes the result exactly invariant
    # under relabeling the symbol values
    counts = np.sort(np.fromiter(counter.values(), dtype=np.float64))
    p = counts / total
    return float(-(p * np.log2(p)).sum() + 0.0)  # + 0.0 folds -0.0 into 0.0


def pad_to_multiple(t: Tensor3, multiple: int) -> Tensor3:
    """Edge-replicate the bottom/right borders up to a size multiple."""
    pad_h = (-t.height) % multiple
    pad_w = (-t.width) % multiple
    if pad_h == 0 and pad_w == 0:
        return t
    return Tensor3(np.pad(t.data, ((0, 0), (0, pad_h), (0, pad_w)), mode="edge"))


def estimate_rates(net: AnalysisNet, images: Sequence[Tensor3]) -> ChannelRateReport:
    """Pool quantized latents of ``images`` and rate every channel.

    Images whose sides are not multiples of the net's downsampling factor
    are edge-replicated. Ties in the rate ranking break toward the lower
    channel index.
    """
    if not images:
        raise ValueError("estimate_rates needs at least one image")
    s = net.downsampling
    channels = net.latent_channels
    counters = [Counter() for _ in range(channels)]
    for image in images:
        z = run_analysis(net, pad_to_multiple(image, s))
        symbols = np.rint(z.data).astype(np.int64)
        for i in range(channels):
            values, counts = np.unique(symbols[i], return_counts=True)
            counters[i].update(dict(zip(values.tolist(), counts.tolist())))
    entropy = np.array([_entropy_bits(c) for c in counters])
    bpp = entropy / float(s * s)
    ranks = sorted(range(channels), key=lambda i: (-entropy[i], i))
    return ChannelRateReport(
        entropy_bits=entropy,
        bpp=bpp,
        total_bpp=float(bpp.sum()),
        ranks=ranks,
        downsampling=s,
    )


def rank_channels(report: ChannelRateReport) -> list[int]:
    """Channel indices in descending-rate order (stable under ties)."""
    return list(report.ranks)
