"""Command line entry point.

    imcgl <subcommand> --config <path> [--out <dir>] [--seed <u64>]

The subcommand must match the experiment name in the config's
[experiment] section; --out and --seed override the config.
"""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, load_config
from .errors import ConfigError
from .experiments import run_experiment


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="imcgl",
        description="spectral cone and graph experiments for a modified "
                    "Ginzburg-Landau system on the 3-torus")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", required=True,
                        help="path to the INI run configuration")
        sp.add_argument("--out", default=None,
                        help="output directory (overrides [experiment] out)")
        sp.add_argument("--seed", default=None, type=int,
                        help="random seed (overrides [experiment] seed)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if cfg.experiment != args.subcommand:
        print(f"error: config requests experiment {cfg.experiment!r} but "
              f"the subcommand is {args.subcommand!r}", file=sys.stderr)
        return 2
    cfg = cfg.with_overrides(out_dir=args.out, seed=args.seed)
    status = run_experiment(cfg)
    if status != 0:
        print(f"error: experiment failed; see error.json in the output "
              f"directory", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
