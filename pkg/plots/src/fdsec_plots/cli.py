"""fdsec-plot: render figure-style plots from fdsec result CSVs."""

from __future__ import annotations

import argparse
import sys

from fdsec_plots.figures import FIGURES, PlotError, render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdsec-plot", description=__doc__)
    p.add_argument("command", choices=["plot"], nargs="?", default="plot")
    p.add_argument("--in", dest="inp", required=True, help="results CSV path")
    p.add_argument("--fig", required=True, choices=sorted(FIGURES),
                   help="figure type")
    p.add_argument("--out", required=True, help="output image path")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        path = render(args.fig, args.inp, args.out)
    except (PlotError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
