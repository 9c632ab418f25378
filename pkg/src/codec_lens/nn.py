"""Forward-only inference for convolutional analysis/synthesis transforms.

Supported layer kinds: strided conv / transposed conv, GDN / IGDN,
ReLU and leaky ReLU. Convolution follows the cross-correlation
convention (no kernel flip), matching mainstream deep-learning
checkpoints. All math runs in float64; weight files store float32 and
are promoted on load.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor3

__all__ = [
    "LayerSpec",
    "SynthesisNet",
    "AnalysisNet",
    "conv2d",
    "tconv2d",
    "gdn",
    "igdn",
    "run_synthesis",
    "run_analysis",
    "quantize",
    "toy_synthesis_net",
    "toy_analysis_net",
]

LAYER_KINDS = ("conv", "tconv", "gdn", "igdn", "relu", "leaky_relu")


def _locked(arr, shape, what) -> np.ndarray:
    a = np.array(arr, dtype=np.float64, order="C")
    if a.shape != tuple(shape):
        raise ValueError(f"{what}: expected shape {tuple(shape)}, got {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{what}: contains NaN or Inf")
    a.setflags(write=False)
    return a


@dataclass
class LayerSpec:
    """One layer of an analysis or synthesis transform.

    Weight layouts: conv [out, in, kh, kw]; tconv [in, out, kh, kw];
    bias and beta [C]; gamma [C, C]. A missing conv/tconv bias means zero.
    """

    kind: str
    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (1, 1)
    stride: int = 1
    padding: int = 0
    output_padding: int = 0
    slope: float = 0.0
    weight: np.ndarray | None = field(default=None, repr=False)
    bias: np.ndarray | None = field(default=None, repr=False)
    beta: np.ndarray | None = field(default=None, repr=False)
    gamma: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        self.kernel = (int(self.kernel[0]), int(self.kernel[1]))
        if self.stride < 1 or self.padding < 0 or self.output_padding < 0:
            raise ValueError("stride must be >= 1; paddings must be >= 0")
        kh, kw = self.kernel
        if self.kind == "conv":
            self.weight = _locked(self.weight, (self.out_channels, self.in_channels, kh, kw), "conv weight")
            if self.bias is not None:
                self.bias = _locked(self.bias, (self.out_channels,), "conv bias")
        elif self.kind == "tconv":
            self.weight = _locked(self.weight, (self.in_channels, self.out_channels, kh, kw), "tconv weight")
            if self.bias is not None:
                self.bias = _locked(self.bias, (self.out_channels,), "tconv bias")
        elif self.kind in ("gdn", "igdn"):
            if self.in_channels != self.out_channels:
                raise ValueError(f"{self.kind} preserves the channel count")
            c = self.in_channels
            self.beta = _locked(self.beta, (c,), f"{self.kind} beta")
            self.gamma = _locked(self.gamma, (c, c), f"{self.kind} gamma")
            if (self.beta <= 0).any():
                raise ValueError(f"{self.kind} beta must be positive")
            if (self.gamma < 0).any():
                raise ValueError(f"{self.kind} gamma must be nonnegative")
        else:  # relu / leaky_relu
            if self.in_channels != self.out_channels:
                raise ValueError(f"{self.kind} preserves the channel count")


def _check_in_channels(x: np.ndarray, layer: LayerSpec) -> None:
    if x.shape[0] != layer.in_channels:
        raise ValueError(
            f"{layer.kind} expects {layer.in_channels} input channels, got {x.shape[0]}"
        )


def _conv2d(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    _check_in_channels(x, layer)
    kh, kw = layer.kernel
    st, p = layer.stride, layer.padding
    if p:
        x = np.pad(x, ((0, 0), (p, p), (p, p)))
    if x.shape[1] < kh or x.shape[2] < kw:
        raise ValueError(
            f"kernel {kh}x{kw} larger than padded input {x.shape[1]}x{x.shape[2]}"
        )
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    windows = windows[:, ::st, ::st]
    out = np.einsum("ocuv,cyxuv->oyx", layer.weight, windows, optimize=True)
    if layer.bias is not None:
        out = out + layer.bias[:, None, None]
    return np.ascontiguousarray(out)


def _tconv2d(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    _check_in_channels(x, layer)
    kh, kw = layer.kernel
    st, p, op = layer.stride, layer.padding, layer.output_padding
    c, h, w = x.shape
    out_h = (h - 1) * st - 2 * p + kh + op
    out_w = (w - 1) * st - 2 * p + kw + op
    if out_h < 1 or out_w < 1:
        raise ValueError(f"transposed conv output size {out_h}x{out_w} is not positive")
    # zero-stuff by the stride, then correlate with the flipped kernel;
    # this is the exact adjoint of _conv2d with the same parameters
    stuffed = np.zeros((c, (h - 1) * st + 1, (w - 1) * st + 1))
    stuffed[:, ::st, ::st] = x
    top, left = kh - 1 - p, kw - 1 - p
    bottom, right = top + op, left + op
    padded = np.pad(
        stuffed,
        ((0, 0), (max(top, 0), max(bottom, 0)), (max(left, 0), max(right, 0))),
    )
    # negative margins (padding larger than kernel allows) crop instead
    padded = padded[
        :,
        max(-top, 0) : padded.shape[1] - max(-bottom, 0),
        max(-left, 0) : padded.shape[2] - max(-right, 0),
    ]
    flipped = layer.weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(1, 2))
    out = np.einsum("ocuv,cyxuv->oyx", flipped, windows, optimize=True)
    if layer.bias is not None:
        out = out + layer.bias[:, None, None]
    assert out.shape == (layer.out_channels, out_h, out_w)
    return np.ascontiguousarray(out)


def _gdn_norm(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    norm = layer.beta[:, None, None] + np.einsum(
        "ij,jhw->ihw", layer.gamma, x * x, optimize=True
    )
    if (norm <= 0).any():
        raise ValueError("gdn normalizer is not positive")
    return np.sqrt(norm)


def _apply(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    if layer.kind == "conv":
        return _conv2d(x, layer)
    if layer.kind == "tconv":
        return _tconv2d(x, layer)
    _check_in_channels(x, layer)
    if layer.kind == "gdn":
        return x / _gdn_norm(x, layer)
    if layer.kind == "igdn":
        return x * _gdn_norm(x, layer)
    if layer.kind == "relu":
        return np.maximum(x, 0.0)
    return np.where(x > 0, x, layer.slope * x)  # leaky_relu


def conv2d(t: Tensor3, layer: LayerSpec) -> Tensor3:
    """Strided cross-correlation with zero padding."""
    return Tensor3(_conv2d(t.data, layer))


def tconv2d(t: Tensor3, layer: LayerSpec) -> Tensor3:
    """Transposed convolution, the adjoint of :func:`conv2d`."""
    return Tensor3(_tconv2d(t.data, layer))


def _check_gdn_layer(t: Tensor3, layer: LayerSpec) -> None:
    if layer.kind not in ("gdn", "igdn"):
        raise ValueError(f"expected a gdn/igdn layer, got {layer.kind!r}")
    _check_in_channels(t.data, layer)


def gdn(t: Tensor3, layer: LayerSpec) -> Tensor3:
    """y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2), per pixel."""
    _check_gdn_layer(t, layer)
    return Tensor3(t.data / _gdn_norm(t.data, layer))


def igdn(t: Tensor3, layer: LayerSpec) -> Tensor3:
    """y_i = x_i * sqrt(beta_i + sum_j gamma_ij x_j^2), per pixel."""
    _check_gdn_layer(t, layer)
    return Tensor3(t.data * _gdn_norm(t.data, layer))


class _Net:
    kind = ""
    _spatial_kind = ""

    def __init__(self, layers) -> None:
        layers = list(layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_channels != nxt.in_channels:
                raise ValueError(
                    f"layer channel mismatch: {prev.kind} emits {prev.out_channels}, "
                    f"{nxt.kind} expects {nxt.in_channels}"
                )
        for layer in layers:
            if layer.kind in ("conv", "tconv") and layer.kind != self._spatial_kind and layer.stride != 1:
                raise ValueError(
                    f"{type(self).__name__} supports strided {self._spatial_kind} only, "
                    f"got strided {layer.kind}"
                )
        self.layers = layers

    @property
    def resampling(self) -> int:
        s = 1
        for layer in self.layers:
            if layer.kind == self._spatial_kind:
                s *= layer.stride
        return s

    def __call__(self, t: Tensor3) -> Tensor3:
        x = t.data
        if x.shape[0] != self.layers[0].in_channels:
            raise ValueError(
                f"{self.kind} net expects {self.layers[0].in_channels} channels, got {x.shape[0]}"
            )
        for layer in self.layers:
            x = _apply(x, layer)
        return Tensor3(x)


class SynthesisNet(_Net):
    """Latent-to-image decoder: tconv stack with optional IGDN/ReLU."""

    kind = "synthesis"
    _spatial_kind = "tconv"

    @property
    def latent_channels(self) -> int:
        return self.layers[0].in_channels

    @property
    def out_channels(self) -> int:
        return self.layers[-1].out_channels

    @property
    def upsampling(self) -> int:
        return self.resampling


class AnalysisNet(_Net):
    """Image-to-latent encoder: conv stack with optional GDN/ReLU."""

    kind = "analysis"
    _spatial_kind = "conv"

    @property
    def in_channels(self) -> int:
        return self.layers[0].in_channels

    @property
    def latent_channels(self) -> int:
        return self.layers[-1].out_channels

    @property
    def downsampling(self) -> int:
        return self.resampling


def run_synthesis(net: SynthesisNet, z: Tensor3) -> Tensor3:
    """Decode a latent. No clamping: basis responses are signed."""
    return net(z)


def run_analysis(net: AnalysisNet, x: Tensor3) -> Tensor3:
    """Encode an image-shaped tensor into its latent."""
    return net(x)


def quantize(z: Tensor3) -> Tensor3:
    """Elementwise round-half-to-even to integers."""
    return Tensor3(np.rint(z.data))


# ---------------------------------------------------------------------------
# small random nets used by the self-test and the test suite


def _rand_gdn(rng, c: int, kind: str) -> LayerSpec:
    beta = rng.uniform(0.5, 1.5, c)
    gamma = rng.uniform(0.0, 0.25, (c, c))
    return LayerSpec(kind, c, c, beta=beta, gamma=gamma)


def toy_synthesis_net(
    seed: int = 0,
    latent_channels: int = 8,
    out_channels: int = 1,
    nonlinear: bool = True,
    bias: bool = True,
) -> SynthesisNet:
    """A 2-stage stride-2 transposed-conv decoder (total upsampling 4)."""
    rng = np.random.default_rng(seed)
    c = latent_channels

    def t_layer(cin, cout):
        w = rng.normal(0.0, 0.4, (cin, cout, 5, 5))
        b = rng.normal(0.0, 0.05, cout) if bias else None
        return LayerSpec("tconv", cin, cout, kernel=(5, 5), stride=2, padding=2,
                         output_padding=1, weight=w, bias=b)

    layers = [t_layer(c, c)]
    if nonlinear:
        layers.append(_rand_gdn(rng, c, "igdn"))
    layers.append(t_layer(c, out_channels))
    return SynthesisNet(layers)


def toy_analysis_net(
    seed: int = 0,
    in_channels: int = 1,
    latent_channels: int = 8,
    nonlinear: bool = True,
    bias: bool = True,
) -> AnalysisNet:
    """A 2-stage stride-2 conv encoder (total downsampling 4)."""
    rng = np.random.default_rng(seed)
    c = latent_channels

    def c_layer(cin, cout):
        w = rng.normal(0.0, 0.4, (cout, cin, 5, 5))
        b = rng.normal(0.0, 0.05, cout) if bias else None
        return LayerSpec("conv", cin, cout, kernel=(5, 5), stride=2, padding=2,
                         weight=w, bias=b)

    layers = [c_layer(in_channels, c)]
    if nonlinear:
        layers.append(_rand_gdn(rng, c, "gdn"))
    layers.append(c_layer(c, c))
    return AnalysisNet(layers)
