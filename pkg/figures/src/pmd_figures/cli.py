"""make_figures: regenerate the paper-style figures from a results tree."""

from __future__ import annotations

import argparse
import sys


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="make_figures",
        description="Render figure analogs (PNG + SVG) from pmdflow CSV outputs",
    )
    parser.add_argument("results_dir", help="pipeline output root with per-case directories")
    parser.add_argument("--only", default=None, help="render only figures whose id contains this string")
    parser.add_argument("--out", default=None, help="image output directory (default <results_dir>/figures)")
    args = parser.parse_args(argv)

    from .jobs import FigureInputError, make_all

    try:
        written = make_all(args.results_dir, out_dir=args.out, only=args.only)
    except FigureInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
