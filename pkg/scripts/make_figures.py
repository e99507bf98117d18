#!/usr/bin/env python3
"""Render the standard figure set from previously generated sweep CSVs.

Expects the CSVs written by run_bounds_sweep.py, run_iteration_trace.py,
and run_mask_demo.py in the results directory.  Requires the companion
``risfigs`` package (figures/).
"""

import argparse
import sys
from pathlib import Path

from risfigs.cli import main as risfigs_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--results", default="results", help="sweep CSV directory")
    ap.add_argument("--figures", default="figures_out", help="output directory")
    args = ap.parse_args()

    res = Path(args.results)
    out = Path(args.figures)
    rc = 0

    bounds = res / "bounds_snr_metrics.csv"
    if bounds.exists():
        rc |= risfigs_main(
            [
                "line-sweep",
                str(bounds),
                "-o",
                str(out / "bounds_vs_snr.png"),
                "--x",
                "snr_db",
                "--y",
                "sqrt_crb_perfect",
                "sqrt_crb_knownloc",
                "sqrt_lb",
                "--logy",
                "--xlabel",
                "SNR (dB)",
                "--ylabel",
                "position error bound (m)",
            ]
        )
    else:
        print(f"skipping bounds figure: {bounds} not found", file=sys.stderr)

    trace = res / "trace_trials.csv"
    if trace.exists():
        rc |= risfigs_main(
            [
                "iteration-trace",
                str(trace),
                "-o",
                str(out / "iteration_trace.png"),
                "--logy",
                "--xlabel",
                "detection round",
                "--ylabel",
                "position error (m)",
            ]
        )
    else:
        print(f"skipping trace figure: {trace} not found", file=sys.stderr)

    mask = res / "mask_demo.csv"
    if mask.exists():
        rc |= risfigs_main(
            ["mask-heatmap", str(mask), "-o", str(out / "mask_heatmap.png")]
        )
    else:
        print(f"skipping mask figure: {mask} not found", file=sys.stderr)

    return rc


if __name__ == "__main__":
    sys.exit(main())
