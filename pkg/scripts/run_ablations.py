#!/usr/bin/env python3
"""Ablations of the adaptive sampler's discretization choices.

Three sweeps, each over the same seed block:
  interval   upper edge lambda_max of the PMF support
  bins       number of PMF bins K
  init       starting shape of the PMF

Each sweep writes its own sweep.csv under --out/<name>/ and reprints the
median rows. Runs use the default desk-scale configuration otherwise.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from tripletlab.cli import main as cli_main

SWEEPS = {
    "interval": ("pmf.lambda_max", "0.8,1.4,2.0"),
    "bins": ("pmf.k", "10,30,60"),
    "init": ("pmf.init", "uniform,uniform:0.3:0.7,gaussian:0.7:0.2"),
}


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/ablations", help="output directory")
    p.add_argument("--seeds", type=int, default=3, help="number of consecutive seeds")
    p.add_argument(
        "--only", choices=sorted(SWEEPS), help="run a single sweep instead of all three"
    )
    p.add_argument(
        "--set", action="append", metavar="KEY=VALUE", default=[], help="config override"
    )
    return p.parse_args()


def main() -> int:
    args = parse_args()
    names = [args.only] if args.only else list(SWEEPS)
    for name in names:
        param, values = SWEEPS[name]
        out = Path(args.out) / name
        print(f"== sweep {name}: {param} in {values} ==")
        argv = ["sweep", "--param", param, "--values", values,
                "--seeds", str(args.seeds), "--out", str(out)]
        for override in args.set:
            argv += ["--set", override]
        rc = cli_main(argv)
        if rc != 0:
            return rc
        for row in (out / "sweep.csv").read_text().splitlines():
            if ",median," in row:
                value, _, r1, nmi = row.split(",")
                print(f"  {param}={value}: R@1 {float(r1):.4f}  NMI {float(nmi):.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
