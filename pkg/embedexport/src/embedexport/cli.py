"""embedexport command line: encode clinical notes into CEMB files."""

from __future__ import annotations

import argparse
import sys
import warnings

from .encoders import ModelResolutionError
from .exporter import export_embeddings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embedexport",
        description="Export sentence-mean-pooled note embeddings as CEMB files",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="encode a notes CSV into a CEMB file")
    p.add_argument("--notes", required=True, help="input CSV with id,text columns")
    p.add_argument(
        "--model",
        default="hashed",
        help="encoder: hashed[:width], st:<model-id>, biolord or mpnet",
    )
    p.add_argument("--out", required=True, help="output CEMB path")
    p.add_argument("--batch-size", type=int, default=32)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            matrix = export_embeddings(args.notes, args.model, args.out, args.batch_size)
        for warning in caught:
            print(f"warning: {warning.message}", file=sys.stderr)
    except ModelResolutionError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {matrix.shape[0]} x {matrix.shape[1]} embeddings to {args.out}")
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
