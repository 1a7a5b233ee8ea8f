#!/usr/bin/env python3
"""Transfer of a trained sampling teacher to a fresh dataset.

Stage 1 trains one adaptive run (the teacher) on the default dataset.
Stage 2 trains students on a regenerated dataset (different data seed):

  fixed-policy     teacher's policy picks actions, no further updates
  fixed-final-pmf  teacher's final PMF frozen for the whole run
  pads             adaptive run trained from scratch (upper reference)
  random           uniform negatives (lower reference)

Prints the median final R@1 per variant over the seed block.
"""

from __future__ import annotations

import argparse
import statistics
import sys
from pathlib import Path

from tripletlab.config import config_from_flat
from tripletlab.trainer import train


def build(base: dict, overrides: dict):
    flat = dict(base)
    flat.update({k: str(v) for k, v in overrides.items()})
    cfg, _ = config_from_flat(flat)
    return cfg


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/transfer", help="output directory")
    p.add_argument("--seeds", type=int, default=3, help="student seeds per variant")
    p.add_argument("--teacher-seed", type=int, default=0)
    p.add_argument("--student-data-seed", type=int, default=1,
                   help="data seed for the transfer target dataset")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="config override, repeatable")
    return p.parse_args()


def main() -> int:
    args = parse_args()
    out = Path(args.out)
    base = {}
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep:
            print(f"error: malformed override {item!r}, expected key=value", file=sys.stderr)
            return 1
        base[key.strip()] = value.strip()

    print("== stage 1: teacher ==")
    teacher_dir = out / "teacher"
    summary = train(build(base, {"seed": args.teacher_seed}), teacher_dir)
    print(f"teacher final R@1 {summary['final']['r1']:.4f} (dir {teacher_dir})")

    variants = {
        "fixed-policy": {
            "transfer.mode": "fixed-policy",
            "transfer.policy_path": str(teacher_dir / "policy.json"),
        },
        "fixed-final-pmf": {
            "transfer.mode": "fixed-final-pmf",
            "transfer.pmf_path": str(teacher_dir / "final_pmf.json"),
        },
        "pads": {},
        "random": {"sampler.kind": "random"},
    }

    print("== stage 2: students on regenerated data ==")
    medians = {}
    for name, extra in variants.items():
        finals = []
        for seed in range(args.seeds):
            cfg = build(base, {"seed": seed, "data.seed": args.student_data_seed, **extra})
            summary = train(cfg, out / f"{name}-s{seed}")
            finals.append(summary["final"]["r1"])
        medians[name] = statistics.median(finals)
        print(f"  {name}: median final R@1 {medians[name]:.4f} over {args.seeds} seeds")

    return 0


if __name__ == "__main__":
    sys.exit(main())
