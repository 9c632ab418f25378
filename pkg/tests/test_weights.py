import json
import struct

import numpy as np
import pytest

from codec_lens.errors import (
    BadMagicError,
    PayloadLengthError,
    UnsupportedVersionError,
    WeightFormatError,
    WeightShapeError,
)
from codec_lens.nn import AnalysisNet, SynthesisNet, toy_analysis_net, toy_synthesis_net
from codec_lens.weights import load_weights, read_weights, save_weights, write_weights


def test_roundtrip_preserves_values_at_f32():
    net = toy_synthesis_net(seed=11)
    back = load_weights(save_weights(net))
    assert isinstance(back, SynthesisNet)
    assert len(back.layers) == len(net.layers)
    for a, b in zip(net.layers, back.layers):
        assert a.kind == b.kind
        for param in ("weight", "bias", "beta", "gamma"):
            va, vb = getattr(a, param), getattr(b, param)
            if va is None:
                assert vb is None
            else:
                assert np.array_equal(va.astype(np.float32), vb.astype(np.float32))
                assert vb.dtype == np.float64  # promoted on load


def test_save_load_save_is_byte_identical():
    for net in (toy_synthesis_net(seed=2), toy_analysis_net(seed=2)):
        blob = save_weights(net)
        assert save_weights(load_weights(blob)) == blob


def test_analysis_kind_roundtrip():
    net = toy_analysis_net(seed=3)
    back = load_weights(save_weights(net))
    assert isinstance(back, AnalysisNet)
    assert back.downsampling == net.downsampling


def test_bad_magic():
    blob = save_weights(toy_synthesis_net())
    with pytest.raises(BadMagicError, match="bad magic"):
        load_weights(b"NOPE" + blob[4:])
    with pytest.raises(BadMagicError):
        load_weights(b"LIC")  # too short to even hold the header


def test_version_mismatch():
    blob = save_weights(toy_synthesis_net())
    bad = blob[:4] + struct.pack("<I", 9) + blob[8:]
    with pytest.raises(UnsupportedVersionError, match="version 9"):
        load_weights(bad)


def test_truncated_payload():
    blob = save_weights(toy_synthesis_net())
    with pytest.raises(PayloadLengthError, match="payload"):
        load_weights(blob[:-8])


def test_trailing_garbage_detected():
    blob = save_weights(toy_synthesis_net())
    with pytest.raises(PayloadLengthError):
        load_weights(blob + b"\x00\x00\x00\x00")


def test_header_length_lies():
    blob = save_weights(toy_synthesis_net())
    bad = blob[:8] + struct.pack("<Q", len(blob)) + blob[16:]
    with pytest.raises(PayloadLengthError, match="header length"):
        load_weights(bad)


def _patch_header(blob, mutate):
    (header_len,) = struct.unpack_from("<Q", blob, 8)
    header = json.loads(blob[16 : 16 + header_len])
    mutate(header)
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return blob[:8] + struct.pack("<Q", len(raw)) + raw + blob[16 + header_len :]


def test_shape_inconsistency():
    blob = save_weights(toy_synthesis_net())

    def grow_kernel(header):
        header["layers"][0]["kernel"] = [7, 7]

    with pytest.raises(WeightShapeError):
        load_weights(_patch_header(blob, grow_kernel))


def test_non_contiguous_offsets():
    blob = save_weights(toy_synthesis_net())

    def shift_offset(header):
        header["tensors"][1]["offset"] += 4

    with pytest.raises(PayloadLengthError, match="contiguity"):
        load_weights(_patch_header(blob, shift_offset))


def test_malformed_json_header():
    blob = save_weights(toy_synthesis_net())
    bad = blob[:16] + b"{not json" + blob[25:]
    with pytest.raises(WeightFormatError):
        load_weights(bad)


def test_unknown_net_kind():
    blob = save_weights(toy_synthesis_net())

    def rename(header):
        header["kind"] = "mystery"

    with pytest.raises(WeightFormatError, match="kind"):
        load_weights(_patch_header(blob, rename))


def test_file_roundtrip(tmp_path):
    net = toy_analysis_net(seed=9)
    path = tmp_path / "net.licw"
    write_weights(net, path)
    first = path.read_bytes()
    write_weights(read_weights(path), path)
    assert path.read_bytes() == first
