import numpy as np
import pytest

from codec_lens.entropy import estimate_rates, pad_to_multiple, rank_channels
from codec_lens.nn import toy_analysis_net
from codec_lens.tensor import Tensor3

from conftest import identity_analysis_net, synthetic_photo, tensor_of


def test_constant_channel_is_zero_bits():
    net = identity_analysis_net(1)
    img = tensor_of(np.full((1, 4, 4), 0.7))
    report = estimate_rates(net, [img])
    assert report.entropy_bits[0] == 0.0
    assert report.total_bpp == 0.0


@pytest.mark.parametrize("k", [1, 2, 3])
def test_uniform_over_2k_symbols(k):
    net = identity_analysis_net(1)
    values = np.tile(np.arange(2**k, dtype=float), 16)
    img = tensor_of(values.reshape(1, 2**k * 4, 4))
    report = estimate_rates(net, [img])
    assert abs(report.entropy_bits[0] - k) <= 1e-9


def test_hand_counted_ranks():
    # channel 0: four equiprobable symbols (2 bits); channel 1: two (1 bit)
    ch0 = np.array([0.0, 1.0, 2.0, 3.0] * 4).reshape(4, 4)
    ch1 = np.array([0.0, 1.0] * 8).reshape(4, 4)
    img = tensor_of(np.stack([ch0, ch1]))
    report = estimate_rates(identity_analysis_net(2), [img])
    assert abs(report.entropy_bits[0] - 2.0) <= 1e-12
    assert abs(report.entropy_bits[1] - 1.0) <= 1e-12
    assert report.ranks == [0, 1]


def test_rank_tie_break_and_order():
    ch = np.array([0.0, 1.0] * 8).reshape(4, 4)
    img = tensor_of(np.stack([ch, ch, ch]))
    report = estimate_rates(identity_analysis_net(3), [img])
    assert rank_channels(report) == [0, 1, 2]  # ties keep channel order

    # rates 1, 3, 2 bits -> ranks [1, 2, 0]
    c0 = np.array([0.0, 1.0] * 32)
    c1 = np.tile(np.arange(8.0), 8)
    c2 = np.tile(np.arange(4.0), 16)
    img = tensor_of(np.stack([c0, c1, c2]).reshape(3, 8, 8))
    report = estimate_rates(identity_analysis_net(3), [img])
    assert report.ranks == [1, 2, 0]
    assert report.rank_positions() == [2, 0, 1]


def test_relabel_invariance(rng):
    base = rng.integers(-3, 4, (1, 8, 8)).astype(float)
    net = identity_analysis_net(1)
    h1 = estimate_rates(net, [Tensor3(base)]).entropy_bits[0]
    relabeled = base * 7.0 + 2.0  # bijection on the quantized symbols
    h2 = estimate_rates(net, [Tensor3(relabeled)]).entropy_bits[0]
    assert abs(h1 - h2) <= 1e-12


def test_duplicate_image_invariance(rng):
    net = identity_analysis_net(2)
    img = Tensor3(rng.integers(-4, 5, (2, 6, 6)).astype(float))
    one = estimate_rates(net, [img])
    two = estimate_rates(net, [img, img])
    assert np.abs(one.entropy_bits - two.entropy_bits).max() <= 1e-12
    assert one.ranks == two.ranks


def test_entropy_bounds(rng):
    net = identity_analysis_net(1)
    img = Tensor3(rng.integers(0, 6, (1, 10, 10)).astype(float))
    report = estimate_rates(net, [img])
    distinct = len(np.unique(img.data))
    assert 0.0 <= report.entropy_bits[0] <= np.log2(distinct) + 1e-12


def test_bpp_normalizes_by_downsampling():
    net = toy_analysis_net(seed=0)  # stride 4
    img = synthetic_photo(16, 16, 1)
    report = estimate_rates(net, [img])
    assert report.downsampling == 4
    assert np.abs(report.bpp - report.entropy_bits / 16.0).max() <= 1e-15
    assert abs(report.total_bpp - report.bpp.sum()) <= 1e-12


def test_pads_misaligned_images():
    net = toy_analysis_net(seed=0)
    img = synthetic_photo(18, 19, 1)  # not a multiple of 4
    report = estimate_rates(net, [img])
    assert report.channels == 8


def test_empty_image_list_rejected():
    with pytest.raises(ValueError):
        estimate_rates(identity_analysis_net(1), [])


def test_pad_to_multiple_replicates_edges():
    t = tensor_of(np.arange(6.0).reshape(1, 2, 3))
    padded = pad_to_multiple(t, 4)
    assert padded.shape == (1, 4, 4)
    assert padded.data[0, 3, 0] == t.data[0, 1, 0]
    assert padded.data[0, 0, 3] == t.data[0, 0, 2]
