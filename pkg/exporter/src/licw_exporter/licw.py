"""Standalone LICW writer.

Implements the container format from scratch (independent of the
consumer package, which carries its own reader/writer): magic ``LICW``,
uint32 version, uint64 header length, canonical JSON header, float32
little-endian payload with tensors contiguous in declared order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"LICW"
VERSION = 1

LAYER_FIELDS = ("kind", "in_channels", "out_channels", "kernel", "stride",
                "padding", "output_padding", "slope")

LAYER_DEFAULTS = {"kernel": [1, 1], "stride": 1, "padding": 0,
                  "output_padding": 0, "slope": 0.0}


def layer_header(**fields) -> dict:
    """A complete layer-header dict with defaults filled in."""
    header = dict(LAYER_DEFAULTS)
    header.update(fields)
    missing = [f for f in ("kind", "in_channels", "out_channels") if f not in header]
    if missing:
        raise ValueError(f"layer header missing {missing}")
    return {k: header[k] for k in LAYER_FIELDS}


def write_licw(kind: str, layers: list[dict], tensors: list[tuple[str, np.ndarray]]) -> bytes:
    """Assemble a LICW blob; ``tensors`` order defines payload order."""
    if kind not in ("analysis", "synthesis"):
        raise ValueError(f"kind must be analysis or synthesis, got {kind!r}")
    table = []
    chunks = []
    offset = 0
    for name, value in tensors:
        blob = np.ascontiguousarray(value, dtype="<f4").tobytes()
        table.append({"name": name, "shape": list(np.shape(value)), "offset": offset})
        chunks.append(blob)
        offset += len(blob)
    header = {
        "kind": kind,
        "layers": [layer_header(**layer) for layer in layers],
        "tensors": table,
    }
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join(
        [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(raw)), raw] + chunks
    )
