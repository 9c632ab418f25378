"""licw-export command line: checkpoint conversion and toy coder generation."""

from __future__ import annotations

import argparse
import sys

from .export import ExportError, export
from .toy import make_toy


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="licw-export",
        description="Convert learned-image-compression checkpoints to LICW weight files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="convert one transform of a checkpoint")
    p.add_argument("--model", required=True, help="model id, e.g. bmshj2018-factorized")
    p.add_argument("--quality", type=int, required=True)
    p.add_argument("--out", required=True, help="output .licw path")
    p.add_argument("--part", choices=("analysis", "synthesis"), default="synthesis")
    p.add_argument("--checkpoint", help="local checkpoint file")
    p.add_argument("--url", help="checkpoint URL (downloaded once into a cache)")
    p.add_argument("--cache-dir", help="download cache directory")

    p = sub.add_parser("make-toy", help="emit a small random analysis/synthesis pair")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export":
            manifest = export(
                args.model,
                args.quality,
                args.out,
                part=args.part,
                checkpoint=args.checkpoint,
                url=args.url,
                cache_dir=args.cache_dir,
            )
            print(f"wrote {manifest.out_path} ({len(manifest.layers)} layers, "
                  f"sha256 {manifest.sha256[:12]})")
        else:
            ga, gs = make_toy(args.out, seed=args.seed)
            print(f"wrote {ga} and {gs}")
        return 0
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
