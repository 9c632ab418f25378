import numpy as np
import pytest

from codec_lens.nn import AnalysisNet, LayerSpec, SynthesisNet
from codec_lens.tensor import ImagePlane, Tensor3


def identity_analysis_net(channels: int) -> AnalysisNet:
    """1x1 conv with an identity weight: latent == input."""
    weight = np.eye(channels).reshape(channels, channels, 1, 1)
    return AnalysisNet([LayerSpec("conv", channels, channels, weight=weight)])


def identity_synthesis_net(channels: int) -> SynthesisNet:
    weight = np.eye(channels).reshape(channels, channels, 1, 1)
    return SynthesisNet([LayerSpec("tconv", channels, channels, weight=weight)])


def synthetic_photo(height: int = 64, width: int = 64, channels: int = 1) -> ImagePlane:
    """A deterministic photo-like test image: gradients, texture, an edge."""
    y = np.linspace(0.0, 1.0, height)[:, None]
    x = np.linspace(0.0, 1.0, width)[None, :]
    base = 0.45 + 0.3 * np.sin(6.0 * x + 2.0 * y) * np.cos(4.0 * y)
    base += 0.15 * (x > 0.55)
    base += 0.05 * np.sin(40.0 * x) * np.sin(35.0 * y)
    planes = [np.clip(base * (1.0 - 0.12 * k), 0.0, 1.0) for k in range(channels)]
    return ImagePlane(np.stack(planes))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def tensor_of(values) -> Tensor3:
    return Tensor3(np.asarray(values, dtype=np.float64))
