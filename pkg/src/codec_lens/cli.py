"""Command line surface.

Subcommands: basis, decompose, separability, rates, compare, selftest.
Built-in linear decoders (``--decoder dct:8``, ``wht:4``, ``haar:8``)
make every pipeline runnable with zero external assets; trained coders
come in as LICW weight files. Exit codes: 0 success, 1 self-test or
property failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import glob
import io
import os
import sys

import numpy as np

from . import analysis as ana
from . import entropy as ent
from . import figures, linear, nn, render
from .errors import CodecLensError
from .tensor import ImagePlane, Tensor3, load_image
from .util import atomic_write, canonical_json_bytes
from .weights import load_weights, read_weights, save_weights

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

BUILTIN_TRANSFORMS = {"dct": linear.dct_matrix, "wht": linear.wht_matrix, "haar": linear.haar_matrix}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE) -> None:
        super().__init__(message)
        self.code = code


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except CliError:
        raise
    except (CodecLensError, OSError, ValueError, IndexError) as exc:
        raise CliError(f"stage '{name}': {exc}") from exc


def _glob_images(pattern: str | None) -> list[str]:
    if not pattern:
        raise CliError("no --images given")
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise CliError(f"--images matched nothing: {pattern}")
    return paths


def _load_images(pattern: str | None) -> list[ImagePlane]:
    return [_stage("load images", load_image, p) for p in _glob_images(pattern)]


def _match_channels(img: ImagePlane, channels: int) -> ImagePlane:
    if img.channels == channels:
        return img
    if channels == 1:
        return ImagePlane(img.data.mean(axis=0, keepdims=True))
    return ImagePlane(np.repeat(img.data, 3, axis=0))


def _builtin_transform(spec: str) -> linear.OrthogonalTransform:
    name, _, size = spec.partition(":")
    if name not in BUILTIN_TRANSFORMS or not size.isdigit():
        raise CliError(
            f"unknown decoder {spec!r}; expected dct:<n>, wht:<n> or haar:<n>"
        )
    return linear.separable_2d(BUILTIN_TRANSFORMS[name](int(size)))


def _resolve_decoder(args) -> ana.Decoder:
    if getattr(args, "decoder", None):
        return ana.LinearBlockDecoder(_stage("build decoder", _builtin_transform, args.decoder))
    if getattr(args, "weights", None):
        net = _stage("load synthesis weights", read_weights, args.weights)
        if not isinstance(net, nn.SynthesisNet):
            raise CliError(f"{args.weights} holds an analysis net, need synthesis")
        return ana.SynthesisDecoder(net)
    raise CliError("need --decoder or --weights")


def _load_analysis(path: str) -> nn.AnalysisNet:
    net = _stage("load analysis weights", read_weights, path)
    if not isinstance(net, nn.AnalysisNet):
        raise CliError(f"{path} holds a synthesis net, need analysis")
    return net


def _latents(args, decoder, images) -> list[Tensor3]:
    """Latents for the given images: g_a(x) for nets, block transform otherwise."""
    latents = []
    if isinstance(decoder, ana.LinearBlockDecoder):
        block = decoder.upsampling
        for img in images:
            mono = _match_channels(img, 1)
            latents.append(decoder.encode(ent.pad_to_multiple(mono, block)))
    else:
        if not args.analysis_weights:
            raise CliError("need --analysis-weights to encode images for this decoder")
        net = _load_analysis(args.analysis_weights)
        for img in images:
            matched = _match_channels(img, net.in_channels)
            latents.append(nn.run_analysis(net, ent.pad_to_multiple(matched, net.downsampling)))
    if getattr(args, "quantize", False):
        latents = [nn.quantize(z) for z in latents]
    return latents


def _write_json(path: str, doc) -> None:
    atomic_write(path, canonical_json_bytes(doc))


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write(path, buf.getvalue().encode("utf-8"))


def _ensure_out(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _grid_layout(args, default_scale: str, labels: str = "none") -> render.GridLayout:
    return render.GridLayout(
        columns=args.columns,
        gutter=2,
        labels=labels,
        scale=args.scale_mode or default_scale,
    )


# ---------------------------------------------------------------------------
# commands


def cmd_basis(args) -> int:
    out = _ensure_out(args)
    decoder = _resolve_decoder(args)
    channels = decoder.latent_channels

    ranks = None
    rate_report = None
    if args.amplitudes in ("kodak-max", "abs-max"):
        if not (args.analysis_weights and args.images):
            raise CliError(f"--amplitudes {args.amplitudes} needs --analysis-weights and --images")
        net = _load_analysis(args.analysis_weights)
        images = _load_images(args.images)
        images = [_match_channels(img, net.in_channels) for img in images]
        amplitudes = _stage(
            "amplitudes", ana.amplitudes_from_images, net, images,
            absolute=args.amplitudes == "abs-max",
        )
        rate_report = _stage("rates", ent.estimate_rates, net, images)
        ranks = rate_report.rank_positions()
    else:
        amplitudes = np.ones(channels)

    basis = _stage("extract basis", ana.extract_basis, decoder, amplitudes,
                   offset_free=args.offset_free, ranks=ranks)
    _stage("save basis", ana.save_basis_set, basis, os.path.join(out, "basis"))
    layout = _grid_layout(args, "symmetric-zero", labels="rank")
    grid = _stage("render grid", render.render_basis_grid, basis, layout, top=args.top)
    atomic_write(os.path.join(out, "grid.png"), grid)
    if rate_report is not None:
        _write_json(os.path.join(out, "rates.json"), rate_report.to_dict())
    print(f"wrote {out}/basis ({basis.channels} channels) and {out}/grid.png")
    return EXIT_OK


def cmd_decompose(args) -> int:
    out = _ensure_out(args)
    decoder = _resolve_decoder(args)
    paths = _glob_images(args.images)
    image = _stage("load image", load_image, paths[0])
    z = _latents(args, decoder, [image])[0]

    joint = _stage("joint decode", ana.offset_free_decode, decoder, z)
    chan_tiles = [
        _stage("channel decode", ana.offset_free_decode, decoder, comp)
        for comp in ana.channel_components(z)
    ]
    spat_tiles = [
        _stage("spatial decode", ana.offset_free_decode, decoder, comp)
        for comp in ana.spatial_components(z)
    ]
    layout = _grid_layout(args, "minmax")
    atomic_write(
        os.path.join(out, "channel_mosaic.png"),
        render.render_decomposition_mosaic(chan_tiles, layout),
    )
    atomic_write(
        os.path.join(out, "spatial_mosaic.png"),
        render.render_decomposition_mosaic(
            spat_tiles, render.GridLayout(columns=z.width, gutter=layout.gutter,
                                          labels="none", scale=layout.scale)
        ),
    )
    one = render.GridLayout(columns=1, gutter=0, scale=layout.scale)
    atomic_write(os.path.join(out, "joint.png"), render.render_decomposition_mosaic([joint], one))
    aggregate_c = ana.aggregate_channel(decoder, z)
    aggregate_s = ana.aggregate_spatial(decoder, z)
    side_by_side = render.GridLayout(columns=3, gutter=4, scale=layout.scale)
    atomic_write(
        os.path.join(out, "comparison.png"),
        render.render_decomposition_mosaic([aggregate_c, aggregate_s, joint], side_by_side),
    )
    print(
        f"wrote {out}/channel_mosaic.png ({len(chan_tiles)} tiles), "
        f"{out}/spatial_mosaic.png ({len(spat_tiles)} tiles), joint.png, comparison.png"
    )
    return EXIT_OK


def cmd_separability(args) -> int:
    out = _ensure_out(args)
    decoder = _resolve_decoder(args)
    images = _load_images(args.images)
    latents = _stage("encode", _latents, args, decoder, images)
    subset = None if args.spatial_subset == 0 else args.spatial_subset
    report = _stage("separability", ana.separability, decoder, latents, spatial_subset=subset)
    _write_json(os.path.join(out, "separability.json"), report.to_dict())
    rows = [
        [i, f"{c:.9g}", f"{report.per_latent_spatial[i]:.9g}" if i < len(report.per_latent_spatial) else ""]
        for i, c in enumerate(report.per_latent_channel)
    ]
    _write_csv(os.path.join(out, "separability.csv"), ["latent", "mse_channel", "mse_spatial"], rows)
    figures.separability_figure(report, os.path.join(out, "separability.png"))
    print(
        f"mse_channel {report.mse_channel:.6g} (std {report.std_channel:.6g}), "
        f"mse_spatial {report.mse_spatial:.6g} (std {report.std_spatial:.6g})"
    )
    return EXIT_OK


def cmd_rates(args) -> int:
    out = _ensure_out(args)
    if not args.analysis_weights:
        raise CliError("rates needs --analysis-weights")
    net = _load_analysis(args.analysis_weights)
    images = [_match_channels(img, net.in_channels) for img in _load_images(args.images)]
    report = _stage("rates", ent.estimate_rates, net, images)
    _write_json(os.path.join(out, "rates.json"), report.to_dict())
    positions = report.rank_positions()
    rows = [
        [i, f"{report.entropy_bits[i]:.9g}", f"{report.bpp[i]:.9g}", positions[i]]
        for i in range(report.channels)
    ]
    _write_csv(os.path.join(out, "rates.csv"), ["channel", "entropy_bits", "bpp", "rank"], rows)
    figures.rates_figure(report, os.path.join(out, "rates.png"))
    print(f"total {report.total_bpp:.4f} bpp over {report.channels} channels")
    return EXIT_OK


def _reference_basis(args, extent: int):
    name = args.ref
    if os.path.isdir(name):
        return ana.load_basis_set(name)
    if name in BUILTIN_TRANSFORMS:
        return linear.basis_2d(BUILTIN_TRANSFORMS[name](extent))
    if name.startswith("klt:"):
        patch_dir = name[4:]
        vectors = []
        for path in _glob_images(os.path.join(patch_dir, "*")):
            img = _match_channels(load_image(path), 1)
            h = (img.height // extent) * extent
            w = (img.width // extent) * extent
            if h < extent or w < extent:
                continue
            tiles = (
                img.data[0, :h, :w]
                .reshape(h // extent, extent, w // extent, extent)
                .transpose(0, 2, 1, 3)
                .reshape(-1, extent * extent)
            )
            vectors.append(tiles)
        if not vectors:
            raise CliError(f"no usable patches under {patch_dir}")
        klt = _stage("klt", linear.klt_from_patches, np.concatenate(vectors))
        images = tuple(row.reshape(extent, extent) for row in klt.matrix)
        return linear.Basis2D(block=extent, images=images)
    raise CliError(f"unknown reference {name!r}; use dct|wht|haar|klt:<dir>|<basis-dir>")


def cmd_compare(args) -> int:
    out = _ensure_out(args)
    basis = _stage("load basis", ana.load_basis_set, args.basis)
    reference = _stage("build reference", _reference_basis, args, basis.extent)
    report = _stage("similarity", ana.basis_similarity, basis, reference)
    _write_json(os.path.join(out, "compare.json"), report.to_dict())
    _write_csv(
        os.path.join(out, "compare.csv"),
        ["basis", "reference", "score"],
        [[b, r, f"{s:.9g}"] for b, r, s in report.pairs],
    )
    figures.similarity_figure(report, os.path.join(out, "compare.png"))
    print(f"mean assigned similarity {report.mean_score:.6f} over {len(report.pairs)} pairs")
    return EXIT_OK


# ---------------------------------------------------------------------------
# self test


def _selftest_checks(seed: int, corrupt_weights: bool):
    rng = np.random.default_rng(seed)

    def orthonormality():
        for build in (linear.dct_matrix, linear.wht_matrix, linear.haar_matrix):
            for n in (4, 16, 64):
                t = build(n)
                err = np.abs(t.matrix @ t.matrix.T - np.eye(n)).max()
                if err > 1e-9:
                    return f"{t.name}: orthonormality error {err:.2e}"
        return None

    def partition_identity():
        for _ in range(25):
            c, h, w = rng.integers(1, 6, 3)
            z = Tensor3(rng.normal(size=(c, h, w)))
            if not (sum(t.data for t in ana.spatial_components(z)) == z.data).all():
                return "spatial components do not sum back to z"
            if not (sum(t.data for t in ana.channel_components(z)) == z.data).all():
                return "channel components do not sum back to z"
        return None

    def conv_adjoint():
        # odd sizes with k3/s2/p1 make the transposed output land exactly on
        # the input grid, so the identity holds with no output_padding
        for _ in range(5):
            layer = nn.LayerSpec(
                "conv", 2, 3, kernel=(3, 3), stride=2, padding=1,
                weight=rng.normal(size=(3, 2, 3, 3)),
            )
            x = Tensor3(rng.normal(size=(2, 7, 9)))
            y = Tensor3(rng.normal(size=nn.conv2d(x, layer).shape))
            tlayer = nn.LayerSpec(
                "tconv", 3, 2, kernel=(3, 3), stride=2, padding=1,
                weight=layer.weight,
            )
            lhs = float((nn.conv2d(x, layer).data * y.data).sum())
            rhs = float((x.data * nn.tconv2d(y, tlayer).data).sum())
            if abs(lhs - rhs) > 1e-10 * max(1.0, abs(lhs)):
                return f"adjoint identity violated: {lhs} vs {rhs}"
        return None

    def linear_oracle():
        decoder = ana.LinearBlockDecoder(linear.separable_2d(linear.dct_matrix(4)))
        latents = [Tensor3(rng.normal(size=(16, 3, 4))) for _ in range(2)]
        report = ana.separability(decoder, latents, spatial_subset=None)
        worst = max(report.mse_channel, report.mse_spatial)
        if worst > 1e-9:
            return f"linear decoder separability {worst:.2e} exceeds 1e-9"
        return None

    def shift_equivariance():
        net = nn.toy_synthesis_net(seed=seed, nonlinear=False, bias=False)
        dec = ana.SynthesisDecoder(net)
        s = dec.upsampling
        c, h, w = dec.latent_channels, 7, 7
        base = np.zeros((c, h, w))
        base[2, 3, 3] = 1.0
        shifted = np.zeros((c, h, w))
        shifted[2, 3, 4] = 1.0
        a = dec.decode(Tensor3(base)).data
        b = dec.decode(Tensor3(shifted)).data
        # both responses sit well inside the borders, so the shifted
        # overlap must agree everywhere
        diff = np.abs(a[:, :, : -s] - b[:, :, s:]).max()
        if diff > 1e-9:
            return f"shift equivariance broken: interior diff {diff:.2e}"
        return None

    def weights_roundtrip():
        net = nn.toy_synthesis_net(seed=seed)
        blob = save_weights(net)
        if corrupt_weights:
            blob = b"XICW" + blob[4:]
        reloaded = load_weights(blob)
        if save_weights(reloaded) != blob:
            return "save/load/save is not byte-identical"
        return None

    return [
        ("orthonormality", orthonormality),
        ("partition-identity", partition_identity),
        ("conv-adjoint", conv_adjoint),
        ("linear-oracle", linear_oracle),
        ("shift-equivariance", shift_equivariance),
        ("weights-roundtrip", weights_roundtrip),
    ]


def cmd_selftest(args) -> int:
    failures = []
    for name, check in _selftest_checks(args.seed, args.corrupt_weights):
        try:
            problem = check()
        except CodecLensError as exc:
            problem = str(exc)
        status = "pass" if problem is None else f"FAIL ({problem})"
        print(f"{name}: {status}")
        if problem is not None:
            failures.append(name)
    if failures:
        print(f"self-test failed at: {failures[0]}")
        return EXIT_FAIL
    print("all self-tests passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing


def _add_common(p: argparse.ArgumentParser, *names: str) -> None:
    if "weights" in names:
        p.add_argument("--weights", help="LICW synthesis weights")
    if "analysis" in names:
        p.add_argument("--analysis-weights", help="LICW analysis weights")
    if "decoder" in names:
        p.add_argument("--decoder", help="built-in linear decoder, e.g. dct:8")
    if "images" in names:
        p.add_argument("--images", help="glob of input images (png/ppm/pgm)")
    if "out" in names:
        p.add_argument("--out", default=".", help="output directory")
    if "layout" in names:
        p.add_argument("--columns", type=int, default=8)
        p.add_argument("--scale-mode", choices=render.SCALE_MODES, default=None)
        p.add_argument("--top", type=int, default=None, help="limit grid tiles")
    if "quantize" in names:
        p.add_argument("--quantize", action="store_true", help="round latents first")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codec-lens",
        description="Inspect transform image coders: basis functions, "
        "latent decompositions, separability and rate reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("basis", help="extract and render decoder basis functions")
    _add_common(p, "weights", "analysis", "decoder", "images", "out", "layout")
    p.add_argument("--amplitudes", choices=("unit", "kodak-max", "abs-max"), default="unit")
    p.add_argument("--offset-free", action="store_true",
                   help="subtract the decoder's zero response from each basis image")
    p.set_defaults(fn=cmd_basis)

    p = sub.add_parser("decompose", help="spatial/channel decomposition mosaics")
    _add_common(p, "weights", "analysis", "decoder", "images", "out", "layout", "quantize")
    p.set_defaults(fn=cmd_decompose)

    p = sub.add_parser("separability", help="channel/spatial separability metrics")
    _add_common(p, "weights", "analysis", "decoder", "images", "out", "quantize")
    p.add_argument("--spatial-subset", type=int, default=1,
                   help="latents used for the spatial metric (0 = all)")
    p.set_defaults(fn=cmd_separability)

    p = sub.add_parser("rates", help="empirical per-channel bit rates")
    _add_common(p, "analysis", "images", "out")
    p.set_defaults(fn=cmd_rates)

    p = sub.add_parser("compare", help="similarity of a basis set to a reference")
    _add_common(p, "out")
    p.add_argument("--basis", required=True, help="basis set directory")
    p.add_argument("--ref", required=True, help="dct | wht | haar | klt:<dir> | <basis-dir>")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("selftest", help="run the built-in property checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt-weights", action="store_true",
                   help="inject a corrupted weight blob (expected to fail)")
    p.set_defaults(fn=cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except CodecLensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
