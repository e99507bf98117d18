"""Command-line front end for the figure renderer.

One subcommand per figure kind; all of them only read the sweep CSV files
and write an image.  Missing-column problems exit with status 2 and a
diagnostic naming the offending file and columns.
"""

from __future__ import annotations

import argparse
import sys

from .render import FigureSpec, MissingColumnError, render


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("inputs", nargs="+", help="input CSV file(s)")
    sub.add_argument("-o", "--output", required=True, help="output image path")
    sub.add_argument("--title", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risfigs",
        description="Regenerate figures from localization sweep CSV files.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sweep = subs.add_parser(
        "line-sweep", help="metric-vs-axis line plot (e.g. RMSE and bounds vs SNR)"
    )
    _add_common(sweep)
    sweep.add_argument("--x", required=True, help="x-axis column")
    sweep.add_argument(
        "--y", required=True, nargs="+", help="y column(s), one line each"
    )
    sweep.add_argument("--group-by", default=None, help="draw one line per value")
    sweep.add_argument("--logx", action="store_true")
    sweep.add_argument("--logy", action="store_true")
    sweep.add_argument("--xlabel", default=None)
    sweep.add_argument("--ylabel", default=None)
    sweep.add_argument(
        "--labels", nargs="+", default=(), help="legend labels, in plot order"
    )

    trace = subs.add_parser(
        "iteration-trace", help="per-trial convergence traces with an RMS overlay"
    )
    _add_common(trace)
    trace.add_argument("--x", default="iteration", help="x-axis column")
    trace.add_argument("--y", default="pos_err", help="per-iteration error column")
    trace.add_argument("--logy", action="store_true")
    trace.add_argument("--xlabel", default=None)
    trace.add_argument("--ylabel", default=None)

    mask = subs.add_parser(
        "mask-heatmap", help="per-element values on the physical 2-D array grid"
    )
    _add_common(mask)
    mask.add_argument(
        "--columns",
        nargs="+",
        default=["m_true_re", "m_l1_re", "m_succ_re"],
        help="per-element columns, one panel each",
    )
    return parser


def _spec_from_args(args: argparse.Namespace) -> FigureSpec:
    if args.command == "line-sweep":
        return FigureSpec(
            inputs=tuple(args.inputs),
            kind="line-sweep",
            x=args.x,
            y=tuple(args.y),
            output=args.output,
            group_by=args.group_by,
            logx=args.logx,
            logy=args.logy,
            xlabel=args.xlabel,
            ylabel=args.ylabel,
            title=args.title,
            labels=tuple(args.labels),
        )
    if args.command == "iteration-trace":
        return FigureSpec(
            inputs=tuple(args.inputs),
            kind="iteration-trace",
            x=args.x,
            y=(args.y,),
            output=args.output,
            logy=args.logy,
            xlabel=args.xlabel,
            ylabel=args.ylabel,
            title=args.title,
        )
    return FigureSpec(
        inputs=tuple(args.inputs),
        kind="mask-heatmap",
        x="x",
        y=tuple(args.columns),
        output=args.output,
        title=args.title,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = render(_spec_from_args(args))
    except (MissingColumnError, FileNotFoundError, ValueError) as exc:
        print(f"risfigs: error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
