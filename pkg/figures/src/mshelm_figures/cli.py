"""Standalone figure scripts: --csv in, --out image path.

Exit codes: 0 success, 1 bad input (missing file, wrong schema).
"""

import argparse
import sys

from .io import FigureDataError
from .plots import plot_convergence, plot_spectrum


def main_convergence(argv=None):
    parser = argparse.ArgumentParser(
        prog="mshelm-plot-convergence",
        description="Two-panel semilog error plot from one sweep CSV.",
    )
    parser.add_argument("--csv", required=True, help="sweep CSV path")
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    try:
        plot_convergence(args.csv, out=args.out)
    except FigureDataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


def main_spectrum(argv=None):
    parser = argparse.ArgumentParser(
        prog="mshelm-plot-spectrum",
        description="Singular-value decay plot from one or more spectrum CSVs.",
    )
    parser.add_argument("--csv", required=True, nargs="+",
                        help="spectrum CSV path(s); curves are overlaid")
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    try:
        plot_spectrum(args.csv, out=args.out)
    except FigureDataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main_convergence())
