import numpy as np

from licw_exporter import make_toy

from codec_lens.nn import AnalysisNet, SynthesisNet, run_analysis, run_synthesis
from codec_lens.tensor import Tensor3
from codec_lens.weights import read_weights


def test_fixed_seed_is_byte_identical(tmp_path):
    a1, s1 = make_toy(tmp_path / "one", seed=7)
    a2, s2 = make_toy(tmp_path / "two", seed=7)
    assert open(a1, "rb").read() == open(a2, "rb").read()
    assert open(s1, "rb").read() == open(s2, "rb").read()
    a3, _ = make_toy(tmp_path / "three", seed=8)
    assert open(a1, "rb").read() != open(a3, "rb").read()


def test_loadable_by_primary_engine(tmp_path):
    ga_path, gs_path = make_toy(tmp_path, seed=0)
    ga = read_weights(ga_path)
    gs = read_weights(gs_path)
    assert isinstance(ga, AnalysisNet) and isinstance(gs, SynthesisNet)
    assert len(ga.layers) == len(gs.layers) == 3
    assert ga.latent_channels == gs.latent_channels == 8
    assert ga.downsampling == gs.upsampling == 4
    x = Tensor3(np.random.default_rng(1).uniform(0, 1, (1, 16, 16)))
    z = run_analysis(ga, x)
    assert z.shape == (8, 4, 4)
    assert run_synthesis(gs, z).shape == (1, 16, 16)


def test_gdn_invariants_hold(tmp_path):
    _, gs_path = make_toy(tmp_path, seed=3)
    gs = read_weights(gs_path)
    layer = gs.layers[1]
    assert layer.kind == "igdn"
    assert (layer.beta > 0).all()
    assert (layer.gamma >= 0).all()
