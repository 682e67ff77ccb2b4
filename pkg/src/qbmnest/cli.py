"""Command-line entry point.

Subcommands mirror the experiment kinds; each takes --config with a JSON file
holding the experiment configuration, plus optional --seed / --out-dir /
--threads overrides. Exit codes: 0 success, 2 configuration error, 3 runtime
failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import (
    EXPERIMENT_KINDS,
    ConfigError,
    config_from_dict,
    load_config,
    run_experiment,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qbmnest",
        description="Train quantum Boltzmann machines with a truncated-rank "
        "variational inner loop and run the accompanying experiments.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", help="JSON config file", default=None)
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--out-dir", default=None, help="override the output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="parallel workers for sweep points")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = load_config(args.config)
            if cfg.kind != args.kind:
                raise ConfigError(
                    f"kind: config file says {cfg.kind!r} but the "
                    f"{args.kind!r} subcommand was invoked"
                )
        else:
            cfg = config_from_dict({"kind": args.kind})
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out_dir is not None:
            cfg.out_dir = args.out_dir
        if args.threads is not None:
            cfg.threads = args.threads
        cfg.validate()
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    try:
        result = run_experiment(cfg)
    except Exception as err:  # runtime failure -> exit 3, per CLI contract
        print(f"runtime failure: {err}", file=sys.stderr)
        return 3
    print(json.dumps({"out_dir": cfg.out_dir, "kind": cfg.kind}, indent=2))
    if isinstance(result, dict):
        print(json.dumps(result, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
