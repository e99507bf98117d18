#!/usr/bin/env python3
"""Monte-Carlo estimator sweep versus SNR under a fixed failure count.

Compares the failure-agnostic localizer with the joint detect-and-localize
estimators and records the matching bounds in the same CSV.
"""

import argparse
import sys

from risloc.cli import main as risloc_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--snr", nargs="+", type=float, default=[0, 10, 20, 30])
    ap.add_argument("--pfail", nargs="+", type=float, default=[0.05])
    ap.add_argument("--num-failures", type=int, default=None)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=0)
    ap.add_argument("--output", default="results")
    ap.add_argument("--tag", default="estimators_snr")
    args = ap.parse_args()

    argv = ["run", "--preset", "desk", "--seed", str(args.seed)]
    argv += ["--snr"] + [str(s) for s in args.snr]
    argv += ["--pfail"] + [str(p) for p in args.pfail]
    if args.num_failures is not None:
        argv += ["--num-failures", str(args.num_failures)]
    argv += ["--trials", str(args.trials), "--workers", str(args.workers)]
    argv += ["--output", args.output, "--tag", args.tag]
    return risloc_main(argv)


if __name__ == "__main__":
    sys.exit(main())
