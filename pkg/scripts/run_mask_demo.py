#!/usr/bin/env python3
"""Dump one true failure mask next to its sparse and successive estimates.

The CSV has one row per array element with physical (x, y) coordinates and
the real/imaginary parts of the true mask, the sparse-regression estimate,
and the successive-detector estimate — ready for heatmap plotting.
"""

import argparse
import sys

from risloc.cli import main as risloc_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--snr", type=float, default=20.0)
    ap.add_argument("--num-failures", type=int, default=3)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--output", default="results")
    ap.add_argument("--tag", default="mask_demo")
    args = ap.parse_args()

    argv = [
        "mask-demo",
        "--preset",
        "desk",
        "--snr",
        str(args.snr),
        "--num-failures",
        str(args.num_failures),
        "--seed",
        str(args.seed),
        "--output",
        args.output,
        "--tag",
        args.tag,
    ]
    return risloc_main(argv)


if __name__ == "__main__":
    sys.exit(main())
