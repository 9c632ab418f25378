import json

import numpy as np
import pytest
import torch

from licw_exporter import ExportError, export, resolve_nonneg
from licw_exporter.cli import main

from codec_lens.nn import SynthesisNet
from codec_lens.weights import read_weights

from conftest import PEDESTAL, factorized_state_dict, store_nonneg


def test_export_synthesis_loads_and_matches_manifest(tmp_path, checkpoint):
    out = tmp_path / "gs.licw"
    manifest = export("bmshj2018-factorized", 1, out, part="synthesis",
                      checkpoint=str(checkpoint))
    net = read_weights(out)
    assert isinstance(net, SynthesisNet)
    assert len(net.layers) == len(manifest.layers) == 7
    assert net.latent_channels == 12 and net.out_channels == 3
    assert net.upsampling == 16
    # every LICW tensor mapped from exactly one source parameter
    assert len(set(manifest.mapping.values())) == len(manifest.mapping)
    doc = json.loads((tmp_path / "gs.licw.manifest.json").read_text())
    assert doc["sha256"] == manifest.sha256


def test_export_analysis_part(tmp_path, checkpoint):
    out = tmp_path / "ga.licw"
    export("bmshj2018-factorized", 1, out, part="analysis", checkpoint=str(checkpoint))
    net = read_weights(out)
    assert net.kind == "analysis"
    assert net.downsampling == 16
    gdn = net.layers[1]
    assert (gdn.beta > 0).all() and (gdn.gamma >= 0).all()


def test_export_is_idempotent(tmp_path, checkpoint):
    a = export("bmshj2018-factorized", 1, tmp_path / "a.licw", checkpoint=str(checkpoint))
    b = export("bmshj2018-factorized", 1, tmp_path / "b.licw", checkpoint=str(checkpoint))
    assert a.sha256 == b.sha256
    assert (tmp_path / "a.licw").read_bytes() == (tmp_path / "b.licw").read_bytes()


def test_unsupported_model_names_block(tmp_path, checkpoint):
    with pytest.raises(ExportError, match="attention"):
        export("cheng2020-attn", 1, tmp_path / "x.licw", checkpoint=str(checkpoint))


def test_unknown_model_lists_choices(tmp_path, checkpoint):
    with pytest.raises(ExportError, match="bmshj2018-factorized"):
        export("resnet18", 1, tmp_path / "x.licw", checkpoint=str(checkpoint))


def test_download_failure_is_reported(tmp_path):
    with pytest.raises(ExportError, match="download failed"):
        export("bmshj2018-factorized", 1, tmp_path / "x.licw",
               url="https://invalid.host.invalid/ckpt.pth.tar",
               cache_dir=str(tmp_path / "cache"))


def test_checkpoint_not_obtainable(tmp_path):
    with pytest.raises(ExportError, match="not obtainable"):
        export("bmshj2018-factorized", 1, tmp_path / "x.licw")


def test_missing_tensor_named(tmp_path):
    sd = factorized_state_dict()
    del sd["g_s.2.weight"]
    path = tmp_path / "broken.pth.tar"
    torch.save(sd, path)
    with pytest.raises(ExportError, match="g_s.2.weight"):
        export("bmshj2018-factorized", 1, tmp_path / "x.licw", checkpoint=str(path))


def test_kernel_mismatch_rejected(tmp_path):
    sd = factorized_state_dict()
    sd["g_s.0.weight"] = torch.zeros(12, 8, 3, 3)
    path = tmp_path / "broken.pth.tar"
    torch.save(sd, path)
    with pytest.raises(ExportError, match="kernel"):
        export("bmshj2018-factorized", 1, tmp_path / "x.licw", checkpoint=str(path))


def test_channel_chain_mismatch_rejected(tmp_path):
    sd = factorized_state_dict()
    sd["g_s.6.weight"] = torch.zeros(5, 3, 5, 5)  # expects 8 inputs upstream
    sd["g_s.6.bias"] = torch.zeros(3)
    path = tmp_path / "broken.pth.tar"
    torch.save(sd, path)
    with pytest.raises(ExportError):
        export("bmshj2018-factorized", 1, tmp_path / "x.licw", checkpoint=str(path))


def test_state_dict_nesting_unwrapped(tmp_path):
    sd = factorized_state_dict()
    path = tmp_path / "nested.pth.tar"
    torch.save({"state_dict": sd}, path)
    manifest = export("bmshj2018-factorized", 1, tmp_path / "x.licw",
                      checkpoint=str(path))
    assert len(manifest.layers) == 7


def test_resolve_nonneg_roundtrip():
    actual = np.array([1e-6, 0.01, 0.7, 2.5])
    stored = np.sqrt(actual + PEDESTAL)
    back = resolve_nonneg(stored, minimum=1e-6)
    assert np.abs(back - actual).max() <= 1e-12
    # values stored below the bound clamp to the minimum
    tiny = resolve_nonneg(np.zeros(3), minimum=1e-6)
    assert np.abs(tiny - 1e-6).max() <= 1e-18
    zero = resolve_nonneg(np.zeros(3))
    assert (zero == 0.0).all()


def test_store_resolve_agree_with_reference(tmp_path):
    actual = np.random.default_rng(0).uniform(0.0, 0.5, (4, 4))
    stored = store_nonneg(actual).numpy().astype(np.float64)
    assert np.abs(resolve_nonneg(stored) - actual).max() <= 1e-7  # f32 storage


def test_cli_make_toy_and_export(tmp_path, checkpoint, capsys):
    assert main(["make-toy", "--out", str(tmp_path / "toy"), "--seed", "4"]) == 0
    assert (tmp_path / "toy" / "toy_analysis.licw").exists()
    code = main([
        "export", "--model", "bmshj2018-factorized", "--quality", "1",
        "--out", str(tmp_path / "gs.licw"), "--checkpoint", str(checkpoint),
    ])
    assert code == 0
    assert "7 layers" in capsys.readouterr().out
    code = main([
        "export", "--model", "cheng2020-attn", "--quality", "1",
        "--out", str(tmp_path / "y.licw"), "--checkpoint", str(checkpoint),
    ])
    assert code == 2
