"""Command-line interface: `cqexport export --model M --in texts.txt
--out file.cqem --views paired --seed S`.

Exit codes: 0 success, 1 usage error, 2 encoder load failure, 3 empty input.
"""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from .encoder import EncoderLoadError
from .job import (DEFAULT_DROPOUT_NEG, DEFAULT_DROPOUT_POS, EmptyInputError,
                  ExportJob, run_export)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MODEL = 2
EXIT_EMPTY = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqexport")
    sub = parser.add_subparsers(dest="command", required=True)
    ex = sub.add_parser("export", help="encode a text file into binary embeddings")
    ex.add_argument("--model", required=True,
                    help="encoder name/path, or hash-<dim> for the offline encoder")
    ex.add_argument("--in", dest="input_path", required=True,
                    help="input text file, one document per line")
    ex.add_argument("--out", dest="output_path", required=True)
    ex.add_argument("--views", choices=["single", "paired"], default="single")
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--batch-size", type=int, default=32)
    ex.add_argument("--no-dropout", dest="dropout_active", action="store_false",
                    help="disable stochastic dropout during encoding")
    ex.add_argument("--dropout-pos", type=float, default=DEFAULT_DROPOUT_POS)
    ex.add_argument("--dropout-neg", type=float, default=DEFAULT_DROPOUT_NEG)
    ex.add_argument("--negative", action="store_true",
                    help="add a third, higher-dropout view block")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(model=args.model, input_path=args.input_path,
                        output_path=args.output_path, views=args.views,
                        dropout_active=args.dropout_active,
                        dropout_pos=args.dropout_pos,
                        dropout_neg=args.dropout_neg,
                        with_negative=args.negative,
                        batch_size=args.batch_size, seed=args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        summary = run_export(job)
    except EncoderLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except EmptyInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"wrote {job.output_path} "
          f"({summary['count']} x {summary['dim']}, {summary['views']} view(s))")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
