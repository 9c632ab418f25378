"""Declared architectures for the exportable model families.

Architectures are declared per model id rather than introspected from
arbitrary graphs: each entry lists the exact layer sequence of the
analysis (g_a) and synthesis (g_s) transforms with the source-parameter
prefix every layer's tensors live under. Channel widths are read off
the named checkpoint tensors, so all published quality levels of a
family share one declaration.

The GDN parameters in these checkpoints are stored through a
non-negative reparameterization; :func:`resolve_nonneg` undoes it:
value = max(stored, sqrt(minimum + eps^2))^2 - eps^2, with eps = 2^-18.
"""

from __future__ import annotations

import numpy as np

REPARAM_OFFSET = 2.0 ** -18
GDN_BETA_MIN = 1e-6


class ExportError(Exception):
    """Anything that prevents a faithful export."""


def resolve_nonneg(stored: np.ndarray, minimum: float = 0.0) -> np.ndarray:
    pedestal = REPARAM_OFFSET ** 2
    bound = np.sqrt(minimum + pedestal)
    return np.maximum(np.asarray(stored, dtype=np.float64), bound) ** 2 - pedestal


def _coder_5x2(stages: int = 4):
    """conv/tconv k5 s2 stacks with GDN between stages (the bmshj/mbt shape)."""
    analysis = []
    synthesis = []
    for i in range(stages):
        analysis.append({"kind": "conv", "kernel": [5, 5], "stride": 2,
                         "padding": 2, "source": f"g_a.{2 * i}"})
        synthesis.append({"kind": "tconv", "kernel": [5, 5], "stride": 2,
                          "padding": 2, "output_padding": 1, "source": f"g_s.{2 * i}"})
        if i < stages - 1:
            analysis.append({"kind": "gdn", "source": f"g_a.{2 * i + 1}"})
            synthesis.append({"kind": "igdn", "source": f"g_s.{2 * i + 1}"})
    return {"analysis": analysis, "synthesis": synthesis}


SUPPORTED = {
    "bmshj2018-factorized": _coder_5x2(),
    "bmshj2018-hyperprior": _coder_5x2(),
    "mbt2018-mean": _coder_5x2(),
    "mbt2018": _coder_5x2(),
}

# families whose transforms use layers outside conv/tconv/GDN/ReLU
UNSUPPORTED = {
    "cheng2020-anchor": "residual blocks with sub-pixel upsampling",
    "cheng2020-attn": "attention blocks",
    "chen2021-nlaic": "non-local attention blocks",
}


def declared_architecture(model_id: str, part: str) -> list[dict]:
    if part not in ("analysis", "synthesis"):
        raise ExportError(f"part must be 'analysis' or 'synthesis', got {part!r}")
    if model_id in UNSUPPORTED:
        raise ExportError(
            f"unsupported layer kind in {model_id}: {UNSUPPORTED[model_id]}"
        )
    if model_id not in SUPPORTED:
        known = ", ".join(sorted(SUPPORTED))
        raise ExportError(f"unknown model id {model_id!r}; exportable: {known}")
    # deep-copy so callers can annotate freely
    return [dict(layer) for layer in SUPPORTED[model_id][part]]
