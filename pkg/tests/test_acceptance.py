"""Acceptance suite: every release criterion at its pinned tolerance.

Run with ``pytest -s tests/test_acceptance.py`` to see one pass/fail
line per criterion.
"""

import time

import numpy as np
from scipy.optimize import linear_sum_assignment

from codec_lens.analysis import (
    LinearBlockDecoder,
    SynthesisDecoder,
    channel_components,
    extract_basis,
    separability,
    spatial_components,
)
from codec_lens.entropy import estimate_rates
from codec_lens.linear import (
    dct_matrix,
    haar_matrix,
    klt_from_patches,
    linear_basis,
    separable_2d,
    wht_matrix,
)
from codec_lens.nn import LayerSpec, conv2d, tconv2d, toy_synthesis_net
from codec_lens.render import GridLayout, render_basis_grid, render_decomposition_mosaic
from codec_lens.tensor import Tensor3

from conftest import identity_analysis_net, synthetic_photo, tensor_of
from test_nn import naive_conv2d, naive_tconv2d, random_conv_case


def criterion(name: str, passed: bool, detail: str = "") -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] {name}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert passed, line


def all_linear_decoders():
    for build in (dct_matrix, wht_matrix, haar_matrix):
        for n in (4, 8):
            yield LinearBlockDecoder(separable_2d(build(n)))


def test_linear_oracle_separability():
    rng = np.random.default_rng(100)
    photo = synthetic_photo(64, 64, 1)
    start = time.perf_counter()
    worst = 0.0
    for decoder in all_linear_decoders():
        d = decoder.latent_channels
        latents = [Tensor3(rng.normal(size=(d, 3, 3))) for _ in range(3)]
        latents.append(decoder.encode(photo))
        report = separability(decoder, latents, spatial_subset=None)
        worst = max(worst, report.mse_channel, report.mse_spatial)
    elapsed = time.perf_counter() - start
    criterion(
        "linear-oracle separability <= 1e-9, under 5 s",
        worst <= 1e-9 and elapsed < 5.0,
        f"worst {worst:.2e}, {elapsed:.2f} s",
    )


def test_impulse_column_duality():
    rng = np.random.default_rng(101)
    worst = 0.0
    for decoder in all_linear_decoders():
        t = decoder.transform
        amplitudes = rng.uniform(0.5, 3.0, t.dim)
        basis = extract_basis(decoder, amplitudes)
        for i in range(t.dim):
            expected = amplitudes[i] * linear_basis(t, i)
            worst = max(worst, np.abs(basis.images[i].data.ravel() - expected).max())
    criterion("impulse/column duality <= 1e-12", worst <= 1e-12, f"worst {worst:.2e}")


def test_orthonormality_suite():
    worst_gram = 0.0
    worst_parseval = 0.0
    rng = np.random.default_rng(102)
    for build in (dct_matrix, wht_matrix, haar_matrix):
        for n in (2, 4, 8, 16, 32, 64):
            t = build(n)
            worst_gram = max(worst_gram, np.abs(t.matrix @ t.matrix.T - np.eye(n)).max())
            x = rng.normal(size=n)
            worst_parseval = max(
                worst_parseval,
                abs(np.linalg.norm(t.matrix @ x) - np.linalg.norm(x)),
            )
    n = 8
    u = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    c = np.where(u == 0, np.sqrt(1.0 / n), np.sqrt(2.0 / n))
    closed = c * np.cos(np.pi * (2 * x + 1) * u / (2 * n))
    dct_err = np.abs(dct_matrix(n).matrix - closed).max()
    criterion(
        "orthonormality <= 1e-9, Parseval <= 1e-10, DCT closed form <= 1e-12",
        worst_gram <= 1e-9 and worst_parseval <= 1e-10 and dct_err <= 1e-12,
        f"gram {worst_gram:.2e}, parseval {worst_parseval:.2e}, dct {dct_err:.2e}",
    )


def test_partition_identities():
    rng = np.random.default_rng(103)
    exact = True
    for _ in range(200):
        c, h, w = (int(v) for v in rng.integers(1, 7, 3))
        z = Tensor3(rng.normal(size=(c, h, w)))
        spatial = sum(p.data for p in spatial_components(z))
        chan = sum(p.data for p in channel_components(z))
        if not (np.array_equal(spatial, z.data) and np.array_equal(chan, z.data)):
            exact = False
            break
    criterion("partition identities bit-exact on 200 random shapes", exact)


def test_convolution_oracle():
    rng = np.random.default_rng(104)
    worst = 0.0
    for _ in range(25):
        x, layer = random_conv_case(rng)
        got = conv2d(Tensor3(x), layer).data
        want = naive_conv2d(x, layer.weight, layer.bias, layer.stride, layer.padding)
        worst = max(worst, np.abs(got - want).max())
    for _ in range(25):
        x, layer = random_conv_case(rng, transposed=True)
        got = tconv2d(Tensor3(x), layer).data
        want = naive_tconv2d(x, layer.weight, layer.bias, layer.stride,
                             layer.padding, layer.output_padding)
        worst = max(worst, np.abs(got - want).max())

    worst_adjoint = 0.0
    for _ in range(10):
        weight = rng.normal(size=(3, 2, 3, 3))
        conv = LayerSpec("conv", 2, 3, kernel=(3, 3), stride=2, padding=1, weight=weight)
        tconv = LayerSpec("tconv", 3, 2, kernel=(3, 3), stride=2, padding=1, weight=weight)
        x = Tensor3(rng.normal(size=(2, 9, 7)))
        y = Tensor3(rng.normal(size=conv2d(x, conv).shape))
        lhs = float((conv2d(x, conv).data * y.data).sum())
        rhs = float((x.data * tconv2d(y, tconv).data).sum())
        worst_adjoint = max(worst_adjoint, abs(lhs - rhs) / max(1.0, abs(lhs)))
    criterion(
        "convolution oracle <= 1e-12 on 50 cases, adjoint <= 1e-10",
        worst <= 1e-12 and worst_adjoint <= 1e-10,
        f"oracle {worst:.2e}, adjoint {worst_adjoint:.2e}",
    )


def test_shift_equivariance_stride_4():
    net = toy_synthesis_net(seed=200, nonlinear=False, bias=False)
    dec = SynthesisDecoder(net)
    s = dec.upsampling
    assert s == 4
    c, h, w = dec.latent_channels, 9, 9
    rng = np.random.default_rng(105)
    amplitude = rng.normal(size=c)
    a = np.zeros((c, h, w))
    b = np.zeros((c, h, w))
    a[:, 4, 3] = amplitude
    b[:, 4, 4] = amplitude
    out_a = dec.decode(Tensor3(a)).data
    out_b = dec.decode(Tensor3(b)).data
    # responses sit deep inside the canvas; the s-shifted overlap must agree
    diff = np.abs(out_a[:, :, :-s] - out_b[:, :, s:]).max()
    criterion(
        "shift equivariance: 1 latent step = 4 pixels, interior <= 1e-9",
        diff <= 1e-9,
        f"max interior diff {diff:.2e}",
    )


def test_nonlinearity_detection():
    rng = np.random.default_rng(106)
    latents = [Tensor3(rng.normal(size=(8, 5, 5))) for _ in range(3)]
    gdn_net = SynthesisDecoder(toy_synthesis_net(seed=201, nonlinear=True, bias=True))
    plain = SynthesisDecoder(toy_synthesis_net(seed=201, nonlinear=False, bias=False))
    nonlinear_mse = separability(gdn_net, latents).mse_channel
    linear_mse = separability(plain, latents).mse_channel
    criterion(
        "nonlinearity detection: gdn net > 1e-4, linearized <= 1e-6",
        nonlinear_mse > 1e-4 and linear_mse <= 1e-6,
        f"gdn {nonlinear_mse:.2e}, linear {linear_mse:.2e}",
    )


def test_rate_estimator_criteria():
    net = identity_analysis_net(2)
    constant = np.full((4, 4), 2.0)
    uniform4 = np.tile(np.arange(4.0), 4).reshape(4, 4)
    img = tensor_of(np.stack([constant, uniform4]))
    report = estimate_rates(net, [img])
    constant_ok = report.entropy_bits[0] == 0.0
    uniform_ok = abs(report.entropy_bits[1] - 2.0) <= 1e-9
    doubled = estimate_rates(net, [img, img])
    ranks_ok = report.ranks == doubled.ranks == [1, 0]
    criterion(
        "rate estimator: constant -> 0 bits, uniform 2^k -> k, duplication-stable ranks",
        constant_ok and uniform_ok and ranks_ok,
        f"H0 {report.entropy_bits[0]}, H1 {report.entropy_bits[1]}",
    )


def test_klt_approximates_dct():
    # oracle first: eigendecomposition of the analytic AR(1) covariance
    rho, d = 0.9, 8
    cov = rho ** np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
    evals, evecs = np.linalg.eigh(cov)
    oracle_rows = evecs[:, np.argsort(evals)[::-1]].T
    dct = dct_matrix(d).matrix

    def matched_cosine(rows):
        sim = np.abs(rows @ dct.T)
        r, c = linear_sum_assignment(-sim)
        return float(sim[r, c].mean())

    oracle_score = matched_cosine(oracle_rows)
    assert abs(oracle_score - 0.9993109167072872) <= 1e-9  # frozen oracle value

    rng = np.random.default_rng(107)
    count = 5000
    noise = rng.normal(size=(count, d))
    x = np.empty((count, d))
    x[:, 0] = noise[:, 0]
    for j in range(1, d):
        x[:, j] = rho * x[:, j - 1] + np.sqrt(1 - rho * rho) * noise[:, j]
    t = klt_from_patches(x)
    sample_score = matched_cosine(t.matrix)

    # the sample KLT must also land on the oracle's axes
    axis_match = np.abs(
        np.abs(np.sum(t.matrix * oracle_rows, axis=1)).min()
    )
    criterion(
        "KLT approximates DCT: mean matched |cosine| >= 0.8 (oracle 0.99931)",
        sample_score >= 0.8 and oracle_score >= 0.8 and axis_match >= 0.9,
        f"sample {sample_score:.5f}, oracle {oracle_score:.5f}",
    )


def test_deterministic_rendering(tmp_path):
    rng = np.random.default_rng(108)
    dec = LinearBlockDecoder(separable_2d(haar_matrix(4)))
    basis = extract_basis(dec, rng.uniform(0.5, 2.0, 16), ranks=list(rng.permutation(16)))
    layout = GridLayout(columns=4, gutter=2, scale="symmetric-zero", labels="rank")
    tiles = [Tensor3(rng.normal(size=(3, 12, 12))) for _ in range(5)]

    first = (tmp_path / "a.png", tmp_path / "am.png")
    second = (tmp_path / "b.png", tmp_path / "bm.png")
    for grid_path, mosaic_path in (first, second):
        grid_path.write_bytes(render_basis_grid(basis, layout))
        mosaic_path.write_bytes(render_decomposition_mosaic(tiles, GridLayout(columns=3)))
    same = (
        first[0].read_bytes() == second[0].read_bytes()
        and first[1].read_bytes() == second[1].read_bytes()
    )
    criterion("deterministic rendering: byte-identical files across runs", same)
