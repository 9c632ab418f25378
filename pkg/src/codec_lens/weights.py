"""The LICW portable weight container.

Layout:

* bytes 0-3    ASCII magic ``LICW``
* bytes 4-7    version (1) as little-endian uint32
* bytes 8-15   header byte length as little-endian uint64
* header       UTF-8 JSON: net kind, layer list, tensor table
* payload      float32 little-endian values, tensors contiguous in
               declared order

Tensor layouts match :class:`~codec_lens.nn.LayerSpec`: conv weight
[out, in, kh, kw], tconv weight [in, out, kh, kw], bias/beta [C],
gamma [C, C]. Serialization is canonical, so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import (
    BadMagicError,
    PayloadLengthError,
    UnsupportedVersionError,
    WeightFormatError,
    WeightShapeError,
)
from .nn import AnalysisNet, LayerSpec, SynthesisNet

__all__ = ["MAGIC", "VERSION", "save_weights", "load_weights", "read_weights", "write_weights"]

MAGIC = b"LICW"
VERSION = 1

_PARAM_ORDER = ("weight", "bias", "beta", "gamma")


def _layer_header(layer: LayerSpec) -> dict:
    return {
        "kind": layer.kind,
        "in_channels": layer.in_channels,
        "out_channels": layer.out_channels,
        "kernel": list(layer.kernel),
        "stride": layer.stride,
        "padding": layer.padding,
        "output_padding": layer.output_padding,
        "slope": layer.slope,
    }


def save_weights(net: SynthesisNet | AnalysisNet) -> bytes:
    """Serialize a net to LICW bytes (float32 payload)."""
    tensors = []
    chunks = []
    offset = 0
    for i, layer in enumerate(net.layers):
        for param in _PARAM_ORDER:
            value = getattr(layer, param)
            if value is None:
                continue
            blob = np.ascontiguousarray(value, dtype="<f4").tobytes()
            tensors.append(
                {"name": f"layers.{i}.{param}", "shape": list(value.shape), "offset": offset}
            )
            chunks.append(blob)
            offset += len(blob)
    header = {
        "kind": net.kind,
        "layers": [_layer_header(layer) for layer in net.layers],
        "tensors": tensors,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join(
        [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(header_bytes)), header_bytes]
        + chunks
    )


def _header_int(entry: dict, key: str, minimum: int = 0) -> int:
    try:
        value = int(entry[key])
    except (KeyError, TypeError, ValueError) as exc:
        raise WeightFormatError(f"layer header missing or invalid field {key!r}") from exc
    if value < minimum:
        raise WeightFormatError(f"layer header field {key!r} must be >= {minimum}")
    return value


def load_weights(blob: bytes) -> SynthesisNet | AnalysisNet:
    """Parse LICW bytes back into a net; float32 values promote to float64."""
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic: expected {MAGIC!r}, got {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}, expected {VERSION}")
    (header_len,) = struct.unpack_from("<Q", blob, 8)
    if 16 + header_len > len(blob):
        raise PayloadLengthError(
            f"header length {header_len} exceeds file size {len(blob)}"
        )
    try:
        header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"malformed JSON header: {exc}") from exc
    payload = blob[16 + header_len :]

    kind = header.get("kind")
    if kind not in ("analysis", "synthesis"):
        raise WeightFormatError(f"net kind must be 'analysis' or 'synthesis', got {kind!r}")
    layer_entries = header.get("layers")
    tensor_entries = header.get("tensors")
    if not isinstance(layer_entries, list) or not isinstance(tensor_entries, list):
        raise WeightFormatError("header must carry 'layers' and 'tensors' lists")

    expected = 0
    arrays: dict[str, np.ndarray] = {}
    for entry in tensor_entries:
        name = entry.get("name")
        shape = tuple(entry.get("shape", ()))
        offset = _header_int(entry, "offset")
        if not isinstance(name, str) or name in arrays:
            raise WeightFormatError(f"invalid or duplicate tensor name {name!r}")
        if offset != expected:
            raise PayloadLengthError(
                f"tensor {name}: offset {offset} breaks contiguity (expected {expected})"
            )
        size = 4 * int(np.prod(shape, dtype=np.int64)) if shape else 4
        if offset + size > len(payload):
            raise PayloadLengthError(
                f"tensor {name}: payload ends at {len(payload)}, need {offset + size}"
            )
        values = np.frombuffer(payload, dtype="<f4", count=size // 4, offset=offset)
        arrays[name] = values.astype(np.float64).reshape(shape)
        expected = offset + size
    if expected != len(payload):
        raise PayloadLengthError(
            f"payload has {len(payload)} bytes but tensors account for {expected}"
        )

    layers = []
    for i, entry in enumerate(layer_entries):
        lkind = entry.get("kind")
        params = {
            p: arrays.pop(name)
            for p in _PARAM_ORDER
            if (name := f"layers.{i}.{p}") in arrays
        }
        try:
            layers.append(
                LayerSpec(
                    kind=lkind,
                    in_channels=_header_int(entry, "in_channels", 1),
                    out_channels=_header_int(entry, "out_channels", 1),
                    kernel=tuple(entry.get("kernel", (1, 1))),
                    stride=_header_int(entry, "stride", 1) if "stride" in entry else 1,
                    padding=_header_int(entry, "padding") if "padding" in entry else 0,
                    output_padding=_header_int(entry, "output_padding")
                    if "output_padding" in entry
                    else 0,
                    slope=float(entry.get("slope", 0.0)),
                    **params,
                )
            )
        except ValueError as exc:
            raise WeightShapeError(f"layer {i} ({lkind}): {exc}") from exc
    if arrays:
        raise WeightFormatError(f"unclaimed tensors in payload: {sorted(arrays)}")
    try:
        return SynthesisNet(layers) if kind == "synthesis" else AnalysisNet(layers)
    except ValueError as exc:
        raise WeightShapeError(str(exc)) from exc


def read_weights(path: str | os.PathLike) -> SynthesisNet | AnalysisNet:
    with open(path, "rb") as fh:
        return load_weights(fh.read())


def write_weights(net: SynthesisNet | AnalysisNet, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(save_weights(net))
