"""Command line entry point: ``distlstm run|sweep|synth``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .data import write_jsonl
from .exceptions import ConfigError
from .harness import ExperimentConfig, build_dataset, emit_csv, load_config, run_experiment, sweep

OVERRIDES = {
    "algorithm": "algorithm",
    "seed": "seed",
    "nodes": "nodes",
    "particles": "particles",
    "steps": "steps",
    "rounds": "T",
    "dataset": "dataset",
    "workers": "workers",
}


def _add_common(sub):
    sub.add_argument("--config", help="flat key = value config file")
    sub.add_argument("--algorithm", choices=["sgd", "ekf", "pf", "dekf", "dpf"])
    sub.add_argument("--seed", type=int)
    sub.add_argument("--nodes", type=int)
    sub.add_argument("--particles", type=int)
    sub.add_argument("--steps", type=int)
    sub.add_argument("--rounds", type=int, help="number of rounds T")
    sub.add_argument("--dataset", help="synth_window, synth_varlen or a JSONL path")
    sub.add_argument("--workers", type=int)


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {field: getattr(args, flag) for flag, field in OVERRIDES.items() if getattr(args, flag, None) is not None}
    return cfg.replace(**changes) if changes else cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distlstm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="run one experiment and write the metrics CSV")
    _add_common(run)
    run.add_argument("--out", default="metrics.csv")

    sw = subs.add_parser("sweep", help="run one experiment per value of N or s")
    _add_common(sw)
    sw.add_argument("--param", choices=["N", "s"], required=True)
    sw.add_argument("--values", required=True, help="comma separated, e.g. 25,100,400")
    sw.add_argument("--out-dir", default=".")

    syn = subs.add_parser("synth", help="write the configured synthetic dataset as JSONL")
    _add_common(syn)
    syn.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _config(args)
        if args.command == "run":
            log = run_experiment(cfg)
            emit_csv(log, args.out)
            final = log.network_cumulative_mse()
            print(f"{cfg.algorithm}: {len(log)} rows -> {args.out}"
                  + (f" (final network MSE {final[-1]:.6g})" if final.size else ""))
        elif args.command == "sweep":
            values = [int(v) for v in args.values.split(",") if v.strip()]
            os.makedirs(args.out_dir, exist_ok=True)
            print("value,seconds,final_network_mse,path")
            for value, log, seconds in sweep(cfg, args.param, values):
                path = os.path.join(args.out_dir, f"{cfg.algorithm}_{args.param}{value}.csv")
                emit_csv(log, path)
                final = log.network_cumulative_mse()
                print(f"{value},{seconds:.3f},{final[-1] if final.size else float('nan'):.6g},{path}")
        else:
            write_jsonl(build_dataset(cfg), args.out)
            print(f"wrote {args.out}")
    except (ConfigError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
