"""``authsim`` command line.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .harness.config import ConfigError, Sweep, load_config_file, parse_grid, resolve_param
from .harness.runner import run_experiment
from .harness.table import to_csv

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="authsim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="experiment config file (INI)")
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="CSV path; stdout when omitted and unset in the config")
        p.add_argument("--workers", type=int)
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("run", help="run a configured experiment"))
    sweep = sub.add_parser("sweep", help="sweep one parameter over a grid")
    common(sweep)
    sweep.add_argument("--param", required=True)
    sweep.add_argument("--grid", required=True, help="start:stop:steps")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config_file(args.config)
        cfg = cfg.with_overrides(args.trials, args.seed, args.out, args.workers)
        if args.command == "sweep":
            resolve_param(cfg.scheme, args.param)
            try:
                values = parse_grid(args.grid)
            except ValueError as exc:
                raise ConfigError([f"--grid: {exc}"]) from exc
            cfg = replace(cfg, sweep=Sweep(args.param, values))
        table = run_experiment(cfg)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    text = to_csv(table)
    if cfg.output:
        with open(cfg.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if table.failed:
        for row in table.rows:
            if row.error:
                print(f"numerical failure at {table.param_name}={row.param}: {row.error}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
