"""Command-line entry point: ``tsolab <algorithm> ...``, ``tsolab preset <name>``, ``tsolab run <cfg>``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import ALGORITHMS, ConfigError, ExperimentConfig, apply_override, load_config
from .harness import OUT_ENV, default_output_dir, preset_names, run_experiment, run_preset

# Flags that map directly onto config fields.
_FLAG_FIELDS = {
    "model": ("model", "kind"), "Lx": ("model", "Lx"), "Ly": ("model", "Ly"),
    "T": ("anneal", "T"), "tau": ("qite", "total_tau"), "total_t": ("vqite", "total_t"),
    "eta": ("vqe", "eta"), "max_iters": ("vqe", "max_iters"), "k": ("spectrum", "k"),
    "repeats": ("experiment", "repeats"), "name": ("experiment", "name"),
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="experiment seed (overrides the config)")
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./results)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for multi-run presets")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config field; may be repeated")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsolab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for algo in ALGORITHMS:
        p = sub.add_parser(algo, help=f"run {algo}")
        p.add_argument("--config", help="base config file")
        p.add_argument("--model", choices=["tri", "sq", "chain", "ising2d"])
        p.add_argument("--Lx", type=int)
        p.add_argument("--Ly", type=int)
        p.add_argument("--name")
        if algo in ("qa", "sqa"):
            p.add_argument("--T", type=float, help="total annealing time")
        if algo == "qite":
            p.add_argument("--tau", type=float, help="total imaginary time")
        if algo in ("vqite", "diag-vqite"):
            p.add_argument("--total-t", dest="total_t", type=float)
        if algo == "vqe":
            p.add_argument("--eta", type=float)
            p.add_argument("--max-iters", dest="max_iters", type=int)
        if algo in ("vqite", "diag-vqite", "vqe"):
            p.add_argument("--repeats", type=int, help="number of seeded initializations")
        if algo == "spectrum":
            p.add_argument("--k", type=int)
        _common(p)
    p = sub.add_parser("preset", help="run a bundled experiment suite")
    p.add_argument("name", nargs="?", help="preset name")
    p.add_argument("--list", action="store_true", help="list available presets")
    _common(p)
    p = sub.add_parser("run", help="run a config file")
    p.add_argument("config")
    _common(p)
    return parser


def _config_for(args) -> ExperimentConfig:
    if args.command == "run":
        cfg = load_config(args.config)
    else:
        cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
        cfg.set("experiment", "algorithm", args.command)
        for flag, (sec, key) in _FLAG_FIELDS.items():
            value = getattr(args, flag, None)
            if value is not None:
                cfg.set(sec, key, value)
        if cfg.model_kind is None:
            raise ConfigError("a model is required (--model or a config with [model] kind)")
    for ov in args.overrides:
        apply_override(cfg, ov)
    if args.seed is not None:
        cfg.set("experiment", "seed", args.seed)
    return cfg.validate()


def _dispatch(args, out: str) -> int:
    if args.command == "preset":
        if args.list or not args.name:
            print("\n".join(preset_names()))
            return 0
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides.append(f"experiment.seed={args.seed}")
        index = run_preset(args.name, out, threads=args.threads, overrides=overrides)
        print(json.dumps(index, indent=2, sort_keys=True))
        return 0
    for s in run_experiment(_config_for(args), out):
        keys = ("name", "final_energy", "e0", "converged", "g_min", "s_star")
        print(" ".join(f"{k}={s[k]}" for k in keys if k in s))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    out = args.out or os.environ.get(OUT_ENV) or str(default_output_dir())
    try:
        return _dispatch(args, out)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"tsolab: config error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ArithmeticError) as exc:
        print(f"tsolab: algorithm error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
