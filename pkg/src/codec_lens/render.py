"""Deterministic grid figures: basis grids and decomposition mosaics.

Rendering is a pure function of (tensors, layout): floats are converted
to 8-bit exactly once (round half away from zero), and everything after
that point is integer work, so output files are byte-identical across
runs and platforms. Labels use an embedded 5x7 digit face; metadata
goes into a PNG text chunk.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from .analysis import BasisSet
from .tensor import Tensor3

__all__ = ["GridLayout", "render_basis_grid", "render_decomposition_mosaic", "render_tiles"]

SCALE_MODES = ("minmax", "symmetric-zero", "global")

# 5x7 bitmaps for '0'..'9', one int per row, bit 4 = leftmost pixel
_DIGITS = {
    "0": (0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E),
    "1": (0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "2": (0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F),
    "3": (0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E),
    "4": (0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02),
    "5": (0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E),
    "6": (0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E),
    "7": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08),
    "8": (0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E),
    "9": (0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C),
}


@dataclass(frozen=True)
class GridLayout:
    """Tile arrangement and scaling for grid figures.

    ``tile`` of None keeps each tensor's native resolution; otherwise
    tiles are nearest-neighbor resampled to tile x tile. ``scale`` is one
    of minmax (per tile), symmetric-zero (per tile, zero maps to
    mid-gray) or global (min-max across all tiles).
    """

    columns: int = 8
    tile: int | None = None
    gutter: int = 2
    labels: str = "none"  # none | rank
    scale: str = "minmax"

    def __post_init__(self) -> None:
        if self.columns < 1:
            raise ValueError("columns must be >= 1")
        if self.tile is not None and self.tile < 8:
            raise ValueError("tile size must be >= 8")
        if self.gutter < 0:
            raise ValueError("gutter must be >= 0")
        if self.labels not in ("none", "rank"):
            raise ValueError(f"unknown label mode {self.labels!r}")
        if self.scale not in SCALE_MODES:
            raise ValueError(f"unknown scale mode {self.scale!r}")


def _to_bytes_scaled(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi > lo:
        unit = (values - lo) / (hi - lo)
    else:
        unit = np.full_like(values, 0.5)
    unit = np.clip(unit, 0.0, 1.0)
    # round half away from zero; unit is nonnegative so floor(x + .5) does it
    return np.floor(unit * 255.0 + 0.5).astype(np.uint8)


def _tile_bytes(tensors: Sequence[np.ndarray], mode: str) -> list[np.ndarray]:
    if mode == "global":
        lo = min(float(t.min()) for t in tensors)
        hi = max(float(t.max()) for t in tensors)
        return [_to_bytes_scaled(t, lo, hi) for t in tensors]
    out = []
    for t in tensors:
        if mode == "minmax":
            out.append(_to_bytes_scaled(t, float(t.min()), float(t.max())))
        else:  # symmetric-zero
            a = float(np.abs(t).max())
            out.append(_to_bytes_scaled(t, -a, a))
    return out


def _nearest_resize(tile: np.ndarray, size: int) -> np.ndarray:
    c, h, w = tile.shape
    rows = (np.arange(size) * h) // size
    cols = (np.arange(size) * w) // size
    return tile[:, rows[:, None], cols[None, :]]


def _draw_label(tile: np.ndarray, text: str) -> None:
    x = 1
    for ch in text:
        glyph = _DIGITS.get(ch)
        if glyph is None:
            continue
        for gy, bits in enumerate(glyph):
            yy = 1 + gy
            if yy >= tile.shape[1]:
                break
            for gx in range(5):
                if bits & (1 << (4 - gx)):
                    xx = x + gx
                    if xx < tile.shape[2]:
                        tile[:, yy, xx] = 255
        x += 6
        if x >= tile.shape[2]:
            break


def render_tiles(
    tensors: Sequence[Tensor3],
    layout: GridLayout,
    labels: Sequence[int] | None = None,
    meta: dict | None = None,
) -> bytes:
    """Compose tensors into a labeled grid PNG (the shared machinery)."""
    if not tensors:
        raise ValueError("nothing to render")
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ValueError(f"tiles must share one shape, got {sorted(shapes)}")
    channels = tensors[0].channels
    if channels not in (1, 3):
        raise ValueError(f"renderable tensors have 1 or 3 channels, got {channels}")

    tiles = _tile_bytes([t.data for t in tensors], layout.scale)
    if layout.tile is not None:
        tiles = [_nearest_resize(t, layout.tile) for t in tiles]
    tiles = [np.ascontiguousarray(t) for t in tiles]
    if labels is not None and layout.labels == "rank":
        for tile, number in zip(tiles, labels):
            _draw_label(tile, str(number))

    th, tw = tiles[0].shape[1:]
    cols = min(layout.columns, len(tiles))
    rows = math.ceil(len(tiles) / cols)
    g = layout.gutter
    canvas = np.zeros(
        (channels, rows * th + (rows - 1) * g, cols * tw + (cols - 1) * g),
        dtype=np.uint8,
    )
    for idx, tile in enumerate(tiles):
        r, c = divmod(idx, cols)
        y, x = r * (th + g), c * (tw + g)
        canvas[:, y : y + th, x : x + tw] = tile

    info = PngInfo()
    payload = {
        "columns": layout.columns,
        "tile": layout.tile,
        "gutter": layout.gutter,
        "labels": layout.labels,
        "scale": layout.scale,
    }
    if meta:
        payload.update(meta)
    info.add_text("codec-lens", json.dumps(payload, sort_keys=True))
    image = (
        Image.fromarray(canvas[0], mode="L")
        if channels == 1
        else Image.fromarray(canvas.transpose(1, 2, 0), mode="RGB")
    )
    buf = io.BytesIO()
    image.save(buf, format="PNG", pnginfo=info)
    return buf.getvalue()


def render_basis_grid(basis: BasisSet, layout: GridLayout | None = None, top: int | None = None) -> bytes:
    """Basis images as a grid, ordered (and labeled) by rate rank.

    Without ranks the channel order is kept and labels show the channel
    index. ``top`` limits the grid to the first tiles after ordering.
    """
    if basis.channels == 0:
        raise ValueError("basis set is empty")
    layout = layout or GridLayout(scale="symmetric-zero", labels="rank")
    if basis.ranks is not None:
        order = sorted(range(basis.channels), key=lambda i: basis.ranks[i])
        numbers = [basis.ranks[i] for i in order]
    else:
        order = list(range(basis.channels))
        numbers = order
    if top is not None:
        order, numbers = order[:top], numbers[:top]
    tensors = [basis.images[i] for i in order]
    meta = {"kind": "basis-grid", "decoder": basis.decoder_name, "offset_free": basis.offset_free}
    return render_tiles(tensors, layout, labels=numbers, meta=meta)


def render_decomposition_mosaic(
    components: Sequence[Tensor3], layout: GridLayout | None = None
) -> bytes:
    """Decoded components as a mosaic, in caller order."""
    if not components:
        raise ValueError("no components to render")
    layout = layout or GridLayout(scale="minmax")
    return render_tiles(list(components), layout, meta={"kind": "decomposition-mosaic"})
