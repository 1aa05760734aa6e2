"""Command line: plot <kind> --in <csv> --out <file>.

Exit codes: 0 success, 1 usage/IO error, 2 schema mismatch.
"""

from __future__ import annotations

import argparse
import sys

from .figures import RENDERERS
from .schemas import SchemaError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SCHEMA = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot", description="Render a figure from a pipeline CSV"
    )
    parser.add_argument("kind", choices=sorted(RENDERERS))
    parser.add_argument("--in", dest="csv_path", required=True, help="input CSV")
    parser.add_argument("--out", dest="out_path", required=True,
                        help="output image (.svg, .pdf or .png)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        RENDERERS[args.kind](args.csv_path, args.out_path)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"wrote {args.out_path}")
    return EXIT_OK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
