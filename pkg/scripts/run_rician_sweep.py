#!/usr/bin/env python3
"""Estimator sweep over the Rician K-factor of the fading channel.

Low K (strong scattering) stresses the line-of-sight model assumption;
high K approaches the deterministic channel used everywhere else.
"""

import argparse
import sys

from risloc.cli import main as risloc_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--snr", type=float, default=20.0)
    ap.add_argument(
        "--k-factor", nargs="+", type=float, default=[1.0, 3.0, 10.0, 30.0, 100.0]
    )
    ap.add_argument("--num-failures", type=int, default=1)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--output", default="results")
    ap.add_argument("--tag", default="rician")
    args = ap.parse_args()

    argv = ["rician", "--preset", "desk", "--snr", str(args.snr)]
    argv += ["--kfactor"] + [str(k) for k in args.k_factor]
    argv += ["--num-failures", str(args.num_failures)]
    argv += ["--trials", str(args.trials), "--seed", str(args.seed)]
    argv += ["--output", args.output, "--tag", args.tag]
    return risloc_main(argv)


if __name__ == "__main__":
    sys.exit(main())
