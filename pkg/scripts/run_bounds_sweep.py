#!/usr/bin/env python3
"""Sweep the position-error bounds versus SNR on the desk-scale scenario.

Writes <tag>_trials.csv / <tag>_metrics.csv / <tag>_config.json to the
output directory.  The metrics CSV carries sqrt_crb_perfect,
sqrt_crb_knownloc, and sqrt_lb columns ready for plotting.
"""

import argparse
import sys

from risloc.cli import main as risloc_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--snr", nargs="+", type=float, default=[0, 5, 10, 15, 20, 25, 30])
    ap.add_argument("--pfail", nargs="+", type=float, default=[0.05])
    ap.add_argument("--trials", type=int, default=50, help="mask draws per point")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--output", default="results")
    ap.add_argument("--tag", default="bounds_snr")
    args = ap.parse_args()

    argv = ["bounds", "--preset", "desk", "--seed", str(args.seed)]
    argv += ["--snr"] + [str(s) for s in args.snr]
    argv += ["--pfail"] + [str(p) for p in args.pfail]
    argv += ["--trials", str(args.trials)]
    argv += ["--output", args.output, "--tag", args.tag]
    return risloc_main(argv)


if __name__ == "__main__":
    sys.exit(main())
