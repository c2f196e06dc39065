"""Command-line entry point: ``explorer run|list|check``.

Exit codes: 0 success, 2 config error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import EXPERIMENTS, ConfigError, load_config, preset_names, run_experiment
from .learner import DivergenceError

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="explorer", description="Exploratory portfolio experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a config file or preset name")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    run.add_argument("--threads", type=int, default=1, help="cap on worker threads for path simulation")
    sub.add_parser("list", help="list experiments and shipped presets")
    chk = sub.add_parser("check", help="validate a config without running it")
    chk.add_argument("config")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        print("experiments:")
        for name, (_, desc) in EXPERIMENTS.items():
            print(f"  {name:24s} {desc}")
        print("presets:")
        for name in preset_names():
            print(f"  {name}")
        return EXIT_OK
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "check":
        print(f"ok: {cfg.experiment} (seeds {cfg.seeds}, output {cfg.out})")
        return EXIT_OK
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.threads < 1:
        print("config error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = run_experiment(cfg, out_dir=args.out, threads=args.threads)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"experiment": cfg.experiment, "files": summary["files"][:8], "out": str(args.out or cfg.out)}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
