"""Command-line front end.

Subcommands:
  run        one training run from a config file plus overrides
  compare    sampler list x seeds, shared data split, medians table
  sweep      one config key over a value list x seeds
  gen-data   write a synthetic dataset CSV
  plot-data  flatten a run's pmf.jsonl into long-format CSV for heatmaps

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
from pathlib import Path

from .config import ConfigError, config_from_flat, config_to_flat, parse_kv_file
from .data import generate_synthetic, save_dataset
from .samplers import SAMPLER_KINDS
from .trainer import train


def _overrides_from_args(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError([f"override {pair!r} is not key=value"])
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _build_config(args):
    flat = parse_kv_file(args.config) if args.config else {}
    flat.update(_overrides_from_args(getattr(args, "set", None)))
    if getattr(args, "seed", None) is not None:
        flat["seed"] = str(args.seed)
    cfg, warns = config_from_flat(flat)
    for w in warns:
        print(f"warning: {w}", file=sys.stderr)
    return cfg

def _with_overrides(cfg, **kv):
    flat = config_to_flat(cfg)
    flat.update({k: str(v) for k, v in kv.items()})
    rebuilt, _ = config_from_flat(flat)
    return rebuilt


def _run_dir_name(sampler: str, seed: int) -> str:
    return f"{sampler}-s{seed}"


def cmd_run(args) -> int:
    cfg = _build_config(args)
    out = Path(args.out) if args.out else Path("runs") / _run_dir_name(cfg.sampler.kind, cfg.seed)
    summary = train(cfg, out)
    print(json.dumps(summary, indent=2))
    return 0


def _final_metrics(summary: dict) -> tuple[float, float]:
    return summary["final"]["r1"], summary["final"]["nmi"]


def cmd_compare(args) -> int:
    cfg = _build_config(args)
    samplers = [s.strip() for s in args.samplers.split(",") if s.strip()]
    if len(samplers) < 2:
        raise ConfigError(["compare needs at least 2 sampler kinds"])
    for s in samplers:
        if s not in SAMPLER_KINDS:
            raise ConfigError(
                [f"unknown sampler kind {s!r}; valid kinds: {', '.join(SAMPLER_KINDS)}"]
            )
    if args.seeds < 1:
        raise ConfigError(["compare needs at least 1 seed"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["sampler,seed,final_r1,final_nmi"]
    finals: dict = {s: [] for s in samplers}
    for sampler in samplers:
        for offset in range(args.seeds):
            seed = cfg.seed + offset
            run_cfg = _with_overrides(cfg, **{"sampler.kind": sampler, "seed": seed})
            summary = train(run_cfg, out / _run_dir_name(sampler, seed))
            r1, nmi = _final_metrics(summary)
            finals[sampler].append((r1, nmi))
            rows.append(f"{sampler},{seed},{r1!r},{nmi!r}")
    for sampler in samplers:
        med_r1 = statistics.median(v[0] for v in finals[sampler])
        med_nmi = statistics.median(v[1] for v in finals[sampler])
        rows.append(f"{sampler},median,{med_r1!r},{med_nmi!r}")
    table = out / "comparison.csv"
    table.write_text("\n".join(rows) + "\n")
    print(table)
    return 0


def cmd_sweep(args) -> int:
    cfg = _build_config(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError(["sweep needs at least one value"])
    if args.seeds < 1:
        raise ConfigError(["sweep needs at least 1 seed"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [f"{args.param},seed,final_r1,final_nmi"]
    for value in values:
        per_value = []
        for offset in range(args.seeds):
            seed = cfg.seed + offset
            run_cfg = _with_overrides(cfg, **{args.param: value, "seed": seed})
            tag = value.replace("/", "_").replace(":", "_").replace(",", "+")
            summary = train(run_cfg, out / f"{args.param}={tag}-s{seed}")
            r1, nmi = _final_metrics(summary)
            per_value.append((r1, nmi))
            rows.append(f"{value},{seed},{r1!r},{nmi!r}")
        med_r1 = statistics.median(v[0] for v in per_value)
        med_nmi = statistics.median(v[1] for v in per_value)
        rows.append(f"{value},median,{med_r1!r},{med_nmi!r}")
    table = out / "sweep.csv"
    table.write_text("\n".join(rows) + "\n")
    print(table)
    return 0


def cmd_gen_data(args) -> int:
    if args.classes < 1 or args.per_class < 1 or args.dim < 1:
        raise ConfigError(["classes, per-class and dim must all be >= 1"])
    dataset = generate_synthetic(
        args.classes, args.per_class, args.dim, args.spread, args.std, args.seed
    )
    save_dataset(dataset, args.out)
    print(f"{args.out}: {dataset.n} rows, {dataset.n_classes} classes, dim {dataset.input_dim}")
    return 0


def cmd_plot_data(args) -> int:
    run_dir = Path(args.run)
    src = run_dir / "pmf.jsonl"
    if not src.exists():
        print(f"no PMF stream in {run_dir} (static sampler run)")
        return 0
    rows = ["episode,bin_center,probability"]
    for lineno, line in enumerate(src.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            snap = json.loads(line)
            edges = snap["edges"]
            probs = snap["p"]
            episode = snap["episode"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise RuntimeError(f"{src}:{lineno}: corrupt PMF snapshot ({exc})") from None
        if len(edges) != len(probs) + 1:
            raise RuntimeError(f"{src}:{lineno}: {len(edges)} edges for {len(probs)} bins")
        for lo, hi, p in zip(edges[:-1], edges[1:], probs):
            rows.append(f"{episode},{(lo + hi) / 2!r},{p!r}")
    dest = Path(args.out) if args.out else run_dir / "pmf_long.csv"
    dest.write_text("\n".join(rows) + "\n")
    print(dest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tripletlab", description="triplet metric learning lab with adaptive negative sampling"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")
        p.add_argument("--seed", type=int, help="shorthand for --set seed=N")

    p_run = sub.add_parser("run", help="execute one training run")
    add_config_args(p_run)
    p_run.add_argument("--out", help="run directory (default runs/<sampler>-s<seed>)")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="sampler comparison over shared data")
    add_config_args(p_cmp)
    p_cmp.add_argument("--samplers", required=True, help="comma-separated sampler kinds (>= 2)")
    p_cmp.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p_cmp.add_argument("--out", required=True, help="directory for runs and comparison.csv")
    p_cmp.set_defaults(func=cmd_compare)

    p_sweep = sub.add_parser("sweep", help="sweep one config key over values")
    add_config_args(p_sweep)
    p_sweep.add_argument("--param", required=True, help="config key to sweep, e.g. pmf.k")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--seeds", type=int, default=1)
    p_sweep.add_argument("--out", required=True, help="directory for runs and sweep.csv")
    p_sweep.set_defaults(func=cmd_sweep)

    p_gen = sub.add_parser("gen-data", help="write a synthetic dataset CSV")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--classes", type=int, default=8)
    p_gen.add_argument("--per-class", type=int, default=200)
    p_gen.add_argument("--dim", type=int, default=20)
    p_gen.add_argument("--spread", type=float, default=1.0)
    p_gen.add_argument("--std", type=float, default=1.0)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.set_defaults(func=cmd_gen_data)

    p_plot = sub.add_parser("plot-data", help="PMF progression as long-format CSV")
    p_plot.add_argument("--run", required=True, help="run directory containing pmf.jsonl")
    p_plot.add_argument("--out", help="output CSV (default <run>/pmf_long.csv)")
    p_plot.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - single CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
