"""Command line entry point.

Exit status: 0 when every criterion passes, 1 on a failed criterion or a
runtime error, 2 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .experiments import BUILTIN, run_check, run_experiment


def _print_rows(rows) -> None:
    for r in rows:
        print(f"[{r.status.upper():4s}] {r.id:5s} {r.check}: value={r.value:.6g} bound={r.bound:.6g}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chaoskit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("run", "run the experiment named in a config file"),
        ("pde", "run the mean-field PDE suite on a config file"),
        ("ldp", "run the concentration-inequality suite on a config file"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config")
        sp.add_argument("-o", "--output", help="output directory (overrides the config)")
    cp = sub.add_parser("check", help="run a built-in acceptance suite")
    cp.add_argument("suite", choices=sorted(BUILTIN) + ["determinism", "all"])
    cp.add_argument("-o", "--output", default="chaoskit-check")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.command == "check":
            status, rows = run_check(args.suite, args.output)
        else:
            cfg = load_config(args.config)
            forced = {"pde": "pde", "ldp": "ldp_suite"}.get(args.command)
            status, rows = run_experiment(cfg, output=args.output, experiment=forced)
    except (ConfigError, KeyError) as exc:
        print(f"chaoskit: configuration error: {exc}", file=sys.stderr)
        return 2
    _print_rows(rows)
    return status


if __name__ == "__main__":
    sys.exit(main())
