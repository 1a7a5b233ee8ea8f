#!/usr/bin/env python3
"""Flagship sampler comparison at the default desk-scale configuration.

Trains every negative-sampling strategy over a block of consecutive seeds
on the same synthetic dataset and split, then prints the per-sampler
median of the final validation metrics. All run artifacts and the
comparison.csv table land under --out.

Typical invocation (about two minutes):
    python scripts/run_comparison.py --seeds 5
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from tripletlab.cli import main as cli_main
from tripletlab.samplers import SAMPLER_KINDS


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/comparison", help="output directory")
    p.add_argument("--seeds", type=int, default=5, help="number of consecutive seeds")
    p.add_argument(
        "--samplers",
        default=",".join(SAMPLER_KINDS),
        help="comma-separated sampler kinds (default: all)",
    )
    p.add_argument("--config", help="optional key=value config file")
    p.add_argument(
        "--set", action="append", metavar="KEY=VALUE", default=[], help="config override"
    )
    return p.parse_args()


def main() -> int:
    args = parse_args()
    argv = ["compare", "--samplers", args.samplers, "--seeds", str(args.seeds),
            "--out", args.out]
    if args.config:
        argv += ["--config", args.config]
    for override in args.set:
        argv += ["--set", override]
    rc = cli_main(argv)
    if rc != 0:
        return rc

    table = Path(args.out) / "comparison.csv"
    medians = [row for row in table.read_text().splitlines() if ",median," in row]
    width = max(len(row.split(",")[0]) for row in medians)
    print()
    print(f"{'sampler':<{width}}  final R@1  final NMI")
    for row in medians:
        sampler, _, r1, nmi = row.split(",")
        print(f"{sampler:<{width}}  {float(r1):9.4f}  {float(nmi):9.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
