"""Checkpoint-to-LICW conversion."""

from __future__ import annotations

import hashlib
import json
import os
import urllib.error
import urllib.request
from dataclasses import dataclass

import numpy as np
import torch

from .licw import write_licw
from .models import ExportError, GDN_BETA_MIN, declared_architecture, resolve_nonneg

__all__ = ["ExportManifest", "export", "load_state_dict", "ExportError"]


@dataclass
class ExportManifest:
    model_id: str
    quality: int
    part: str
    layers: list[dict]
    mapping: dict[str, str]  # LICW tensor name -> source parameter name
    sha256: str
    out_path: str = ""
    source: str = ""

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "quality": self.quality,
            "part": self.part,
            "layers": self.layers,
            "mapping": self.mapping,
            "sha256": self.sha256,
            "out_path": self.out_path,
            "source": self.source,
        }


def _fetch(url: str, cache_dir: str | None) -> str:
    cache_dir = cache_dir or os.path.join(
        os.path.expanduser("~"), ".cache", "licw-exporter"
    )
    os.makedirs(cache_dir, exist_ok=True)
    target = os.path.join(cache_dir, os.path.basename(url.split("?")[0]) or "checkpoint.pth")
    if os.path.exists(target):
        return target
    try:
        with urllib.request.urlopen(url, timeout=60) as response, open(
            target + ".part", "wb"
        ) as fh:
            fh.write(response.read())
    except (urllib.error.URLError, OSError, ValueError) as exc:
        raise ExportError(f"download failed for {url}: {exc}") from exc
    os.replace(target + ".part", target)
    return target


def load_state_dict(checkpoint: str) -> dict[str, np.ndarray]:
    """Read a torch checkpoint into float64 numpy arrays, unwrapping nesting."""
    try:
        payload = torch.load(checkpoint, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ExportError(f"cannot read checkpoint {checkpoint}: {exc}") from exc
    if isinstance(payload, dict) and "state_dict" in payload:
        payload = payload["state_dict"]
    if not isinstance(payload, dict):
        raise ExportError(f"checkpoint {checkpoint} does not hold a state dict")
    arrays = {}
    for key, value in payload.items():
        if not torch.is_tensor(value):
            continue
        arrays[key.removeprefix("module.")] = value.detach().numpy().astype(np.float64)
    return arrays


def _take(sd: dict, name: str) -> np.ndarray:
    if name not in sd:
        raise ExportError(f"checkpoint is missing tensor {name!r}")
    return sd[name]


def _build_layers(layers: list[dict], sd: dict):
    """Resolve widths and payload tensors against the declared sequence."""
    tensors: list[tuple[str, np.ndarray]] = []
    mapping: dict[str, str] = {}
    headers: list[dict] = []
    prev_out: int | None = None
    for i, spec in enumerate(layers):
        kind = spec["kind"]
        source = spec["source"]

        def claim(param: str, value: np.ndarray):
            name = f"layers.{i}.{param}"
            tensors.append((name, value))
            mapping[name] = f"{source}.{param}"

        if kind in ("conv", "tconv"):
            weight = _take(sd, f"{source}.weight")
            if weight.ndim != 4:
                raise ExportError(f"{source}.weight has rank {weight.ndim}, expected 4")
            kh, kw = spec["kernel"]
            if weight.shape[2:] != (kh, kw):
                raise ExportError(
                    f"{source}.weight kernel {weight.shape[2:]} does not match "
                    f"declared {(kh, kw)}"
                )
            if kind == "conv":
                out_ch, in_ch = weight.shape[0], weight.shape[1]
            else:
                in_ch, out_ch = weight.shape[0], weight.shape[1]
            claim("weight", weight)
            bias_name = f"{source}.bias"
            if bias_name in sd:
                bias = sd[bias_name]
                if bias.shape != (out_ch,):
                    raise ExportError(
                        f"{bias_name} shape {bias.shape} does not match {out_ch} outputs"
                    )
                claim("bias", bias)
        elif kind in ("gdn", "igdn"):
            if prev_out is None:
                raise ExportError(f"{source}: normalization cannot be the first layer")
            in_ch = out_ch = prev_out
            beta = resolve_nonneg(_take(sd, f"{source}.beta"), GDN_BETA_MIN)
            gamma = resolve_nonneg(_take(sd, f"{source}.gamma"))
            if beta.shape != (in_ch,) or gamma.shape != (in_ch, in_ch):
                raise ExportError(
                    f"{source}: beta {beta.shape} / gamma {gamma.shape} do not fit "
                    f"{in_ch} channels"
                )
            claim("beta", beta)
            claim("gamma", gamma)
        else:
            raise ExportError(f"unsupported layer kind in declaration: {kind!r}")

        if prev_out is not None and in_ch != prev_out:
            raise ExportError(
                f"{source}: expects {in_ch} input channels but the previous "
                f"layer emits {prev_out}"
            )
        header = {k: v for k, v in spec.items() if k != "source"}
        header.update({"in_channels": int(in_ch), "out_channels": int(out_ch)})
        headers.append(header)
        prev_out = out_ch
    return headers, tensors, mapping


def export(
    model_id: str,
    quality: int,
    out_path: str | os.PathLike,
    part: str = "synthesis",
    checkpoint: str | None = None,
    url: str | None = None,
    cache_dir: str | None = None,
) -> ExportManifest:
    """Convert one transform of a checkpoint into a LICW file.

    The checkpoint comes from ``checkpoint`` (local path) or ``url``
    (downloaded once into a cache). A manifest JSON is written next to
    the output file. Re-exporting the same checkpoint reproduces the
    identical file (and checksum).
    """
    layers = declared_architecture(model_id, part)
    if checkpoint is None:
        if url is None:
            raise ExportError(
                "checkpoint not obtainable: pass a local checkpoint path or a url"
            )
        checkpoint = _fetch(url, cache_dir)
    sd = load_state_dict(os.fspath(checkpoint))
    headers, tensors, mapping = _build_layers(layers, sd)
    blob = write_licw(part, headers, tensors)

    out_path = os.fspath(out_path)
    parent = os.path.dirname(out_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(out_path, "wb") as fh:
        fh.write(blob)
    manifest = ExportManifest(
        model_id=model_id,
        quality=quality,
        part=part,
        layers=headers,
        mapping=mapping,
        sha256=hashlib.sha256(blob).hexdigest(),
        out_path=out_path,
        source=os.fspath(checkpoint),
    )
    with open(out_path + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
