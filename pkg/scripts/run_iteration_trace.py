#!/usr/bin/env python3
"""Per-iteration position-error trace of the successive detector.

Each trial logs the position error and detected-set size after every outer
detection round, plus an initialization row (selected_k = -1) and a final
refinement row.
"""

import argparse
import sys

from risloc.cli import main as risloc_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--snr", type=float, default=20.0)
    ap.add_argument("--num-failures", type=int, default=3)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--output", default="results")
    ap.add_argument("--tag", default="trace")
    args = ap.parse_args()

    argv = [
        "trace",
        "--preset",
        "desk",
        "--snr",
        str(args.snr),
        "--num-failures",
        str(args.num_failures),
        "--trials",
        str(args.trials),
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
