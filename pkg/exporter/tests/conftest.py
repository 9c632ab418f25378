import numpy as np
import pytest
import torch

PEDESTAL = (2.0 ** -18) ** 2
GDN_BETA_MIN = 1e-6


def store_nonneg(actual: np.ndarray) -> torch.Tensor:
    """Inverse of the checkpoint reparameterization (what training stores)."""
    return torch.tensor(np.sqrt(np.maximum(actual + PEDESTAL, PEDESTAL)), dtype=torch.float32)


def factorized_state_dict(seed: int = 0, n: int = 8, m: int = 12) -> dict:
    """A checkpoint with the exact layout of a factorized-prior coder.

    Same parameter names, tensor shapes and GDN reparameterization as the
    published zoo files; random weights at toy widths (n, m).
    """
    rng = np.random.default_rng(seed)
    sd = {}
    widths_a = [(3, n), (n, n), (n, n), (n, m)]
    widths_s = [(m, n), (n, n), (n, n), (n, 3)]
    for i, (cin, cout) in enumerate(widths_a):
        sd[f"g_a.{2 * i}.weight"] = torch.tensor(
            rng.normal(0, 0.08, (cout, cin, 5, 5)), dtype=torch.float32
        )
        sd[f"g_a.{2 * i}.bias"] = torch.tensor(rng.normal(0, 0.01, cout), dtype=torch.float32)
        if i < 3:
            sd[f"g_a.{2 * i + 1}.beta"] = store_nonneg(rng.uniform(0.2, 1.0, cout))
            sd[f"g_a.{2 * i + 1}.gamma"] = store_nonneg(rng.uniform(0.0, 0.1, (cout, cout)))
    for i, (cin, cout) in enumerate(widths_s):
        sd[f"g_s.{2 * i}.weight"] = torch.tensor(
            rng.normal(0, 0.08, (cin, cout, 5, 5)), dtype=torch.float32
        )
        sd[f"g_s.{2 * i}.bias"] = torch.tensor(rng.normal(0, 0.01, cout), dtype=torch.float32)
        if i < 3:
            sd[f"g_s.{2 * i + 1}.beta"] = store_nonneg(rng.uniform(0.2, 1.0, cout))
            sd[f"g_s.{2 * i + 1}.gamma"] = store_nonneg(rng.uniform(0.0, 0.1, (cout, cout)))
    return sd


@pytest.fixture
def checkpoint(tmp_path):
    sd = factorized_state_dict(seed=21)
    path = tmp_path / "factorized.pth.tar"
    torch.save(sd, path)
    return path


def reference_gdn(x: torch.Tensor, beta_stored, gamma_stored, inverse: bool,
                  beta_min: float = GDN_BETA_MIN) -> torch.Tensor:
    """Source-framework GDN semantics, evaluated in float32."""
    c = x.shape[1]
    beta = torch.clamp(beta_stored, min=float(np.sqrt(beta_min + PEDESTAL))) ** 2 - PEDESTAL
    gamma = torch.clamp(gamma_stored, min=float(np.sqrt(PEDESTAL))) ** 2 - PEDESTAL
    norm = torch.nn.functional.conv2d(x * x, gamma.reshape(c, c, 1, 1), beta)
    norm = torch.sqrt(norm)
    return x * norm if inverse else x / norm


def reference_synthesis(sd: dict, z: torch.Tensor) -> torch.Tensor:
    """Decode with torch ops only: the oracle the export must match."""
    x = z
    for i in range(4):
        x = torch.nn.functional.conv_transpose2d(
            x, sd[f"g_s.{2 * i}.weight"], sd[f"g_s.{2 * i}.bias"],
            stride=2, padding=2, output_padding=1,
        )
        if i < 3:
            x = reference_gdn(x, sd[f"g_s.{2 * i + 1}.beta"],
                              sd[f"g_s.{2 * i + 1}.gamma"], inverse=True)
    return x


def reference_analysis(sd: dict, img: torch.Tensor) -> torch.Tensor:
    x = img
    for i in range(4):
        x = torch.nn.functional.conv2d(
            x, sd[f"g_a.{2 * i}.weight"], sd[f"g_a.{2 * i}.bias"],
            stride=2, padding=2,
        )
        if i < 3:
            x = reference_gdn(x, sd[f"g_a.{2 * i + 1}.beta"],
                              sd[f"g_a.{2 * i + 1}.gamma"], inverse=False)
    return x
