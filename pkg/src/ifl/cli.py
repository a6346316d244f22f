"""Command-line entry point.

    ifl <subcommand> --config <path> [--out <dir>] [--threads <n>] [--seed <u64>]

Subcommands: gaussian-scaling, testfn-scaling, tail-check, oracle-validate.
Each run writes the experiment's CSV table(s), a JSON summary and, unless
--no-figures is given, PNG figures into the output directory.

Exit codes: 0 all checks pass or are inconclusive, 1 usage or config
error, 2 a hard check failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from .config import KINDS, load_config
from .errors import ConfigError, IflError
from .experiments import run_experiment
from .reports import write_csv, write_json


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; usage errors are 1
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ifl", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="kind", metavar="subcommand")
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", required=True, help="experiment config file (INI)")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=1, help="parallel worker count")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.kind is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        cfg = load_config(
            args.config,
            seed_override=args.seed,
            out_override=args.out,
            threads=max(1, args.threads),
            figures=not args.no_figures,
        )
        if cfg.kind != args.kind:
            raise ConfigError(
                f"config file declares kind {cfg.kind!r} but subcommand is {args.kind!r}"
            )
    except ConfigError as exc:
        print(f"ifl: config error: {exc}", file=sys.stderr)
        return 1

    started = time.time()
    try:
        output = run_experiment(cfg)
    except IflError as exc:
        print(f"ifl: {exc}", file=sys.stderr)
        return 1

    os.makedirs(cfg.out, exist_ok=True)
    written = []
    for name, (columns, rows) in output.tables.items():
        path = os.path.join(cfg.out, f"{name}.csv")
        write_csv(path, columns, rows)
        written.append(path)
    output.summary["wall_clock_seconds"] = round(time.time() - started, 3)
    summary_path = os.path.join(cfg.out, f"{output.kind.replace('-', '_')}_summary.json")
    write_json(summary_path, output.summary)
    written.append(summary_path)

    if cfg.figures:
        from . import figures

        written.extend(figures.render(cfg.kind, output, cfg.out))

    for path in written:
        print(path)
    if output.hard_failure:
        print("ifl: hard check failure (see summary)", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
