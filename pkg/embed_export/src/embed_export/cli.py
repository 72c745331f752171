"""Command line: export PTVT tables, or build a local toy encoder."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .export import ExportError, export_vectors, read_sentences
from .toy_encoder import build_toy_encoder


def _cmd_export(args) -> int:
    if not Path(args.sentences).is_file():
        print(f"error: sentence file {args.sentences} does not exist",
              file=sys.stderr)
        return 2
    sentences = read_sentences(args.sentences)
    report = export_vectors(sentences, args.encoder, layer=args.layer,
                            out_path=args.out, window=args.window)
    flagged = f"; {len(report.segmented)} sentences split at the window" \
        if report.segmented else ""
    print(f"wrote {report.n_sentences} sentences of dim {report.dim} "
          f"to {args.out}{flagged}")
    return 0


def _cmd_make_toy_encoder(args) -> int:
    path = build_toy_encoder(args.out, hidden_size=args.hidden,
                             num_layers=args.layers, window=args.window,
                             seed=args.seed)
    print(f"wrote toy encoder to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="export per-word contextual vectors to PTVT tables")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="encode a sentence file into a table")
    p.add_argument("--sentences", required=True,
                   help="one sentence per line, space-separated word forms")
    p.add_argument("--encoder", required=True,
                   help="local encoder directory or model name")
    p.add_argument("--layer", default="last",
                   help="'last' or a hidden-state index")
    p.add_argument("--window", type=int, default=None,
                   help="override the encoder's input window")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("make-toy-encoder",
                       help="build a small deterministic local encoder")
    p.add_argument("--out", required=True)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--window", type=int, default=48)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_make_toy_encoder)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExportError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
