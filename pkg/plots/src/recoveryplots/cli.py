"""Batch figure generation.

    recoveryplot plot --in results/ --figures fig2,fig3,fig4,delay,contour --out figures/
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import DEFAULT_INPUTS, FIGURE_KINDS, FigureError, FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recoveryplot", description="Render figures from recoverysim CSVs"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    plot = sub.add_parser("plot", help="render one or more figures")
    plot.add_argument("--in", dest="in_dir", required=True, help="CSV input directory")
    plot.add_argument(
        "--figures",
        default=",".join(FIGURE_KINDS),
        help=f"comma-separated subset of {','.join(FIGURE_KINDS)}",
    )
    plot.add_argument("--out", dest="out_dir", required=True, help="image output directory")
    plot.add_argument(
        "--threshold",
        type=float,
        default=5.0,
        help="degradation iso-line percentage for the contour figure",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out_dir)
    kinds = [k.strip() for k in args.figures.split(",") if k.strip()]
    unknown = [k for k in kinds if k not in FIGURE_KINDS]
    if unknown:
        print(f"unknown figure kinds: {', '.join(unknown)}", file=sys.stderr)
        return 2
    failures = 0
    for kind in kinds:
        spec = FigureSpec(
            kind=kind,
            input_csv=in_dir / DEFAULT_INPUTS[kind],
            output_png=out_dir / f"{kind}.png",
            threshold_pct=args.threshold,
        )
        try:
            path = render(spec)
        except FigureError as exc:
            print(f"{kind}: {exc}", file=sys.stderr)
            failures += 1
            continue
        print(path)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
