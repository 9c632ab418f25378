"""Small random coder pairs for integration tests without any download."""

from __future__ import annotations

import os

import numpy as np

from .licw import write_licw

__all__ = ["make_toy"]


def _toy_tensors(rng: np.random.Generator, analysis: bool, channels: int, image_channels: int):
    """3-layer stack: strided 5x5 stage, GDN, strided 5x5 stage (total 4x)."""
    c = channels
    layers = []
    tensors = []

    def stage(i, cin, cout):
        kind = "conv" if analysis else "tconv"
        wshape = (cout, cin, 5, 5) if analysis else (cin, cout, 5, 5)
        layers.append({
            "kind": kind, "in_channels": cin, "out_channels": cout,
            "kernel": [5, 5], "stride": 2, "padding": 2,
            "output_padding": 0 if analysis else 1,
        })
        tensors.append((f"layers.{i}.weight", rng.normal(0.0, 0.1, wshape)))
        tensors.append((f"layers.{i}.bias", rng.normal(0.0, 0.01, cout)))

    first_in = image_channels if analysis else c
    first_out = c
    last_in = c
    last_out = c if analysis else image_channels
    stage(0, first_in, first_out)
    layers.append({
        "kind": "gdn" if analysis else "igdn",
        "in_channels": c, "out_channels": c,
    })
    tensors.append((f"layers.1.beta", rng.uniform(0.5, 1.5, c)))
    tensors.append((f"layers.1.gamma", rng.uniform(0.0, 0.2, (c, c))))
    stage(2, last_in, last_out)
    return layers, tensors


def make_toy(out_dir: str | os.PathLike, seed: int = 0,
             channels: int = 8, image_channels: int = 1) -> tuple[str, str]:
    """Write a deterministic random analysis/synthesis pair.

    Both nets have 3 layers, ``channels`` latent channels and a total
    resampling factor of 4. Returns (analysis_path, synthesis_path);
    the same seed always produces byte-identical files.
    """
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for part in ("analysis", "synthesis"):
        rng = np.random.default_rng(seed)
        layers, tensors = _toy_tensors(rng, part == "analysis", channels, image_channels)
        blob = write_licw(part, layers, tensors)
        path = os.path.join(out_dir, f"toy_{part}.licw")
        with open(path, "wb") as fh:
            fh.write(blob)
        paths.append(path)
    return paths[0], paths[1]
