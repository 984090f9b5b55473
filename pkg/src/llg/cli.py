"""Command line entry point: ``llg run|convergence|check-mesh <config> [--output PATH]``."""

from __future__ import annotations

import argparse
import logging
import sys

from llg.driver import cmd_check_mesh, cmd_convergence, cmd_run, format_rows, load_config
from llg.mesh import MeshError


def build_parser():
    parser = argparse.ArgumentParser(prog="llg", description="Landau-Lifshitz P1 finite element runs")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-level progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "single run on the first configured level"),
        ("convergence", "sweep all configured levels and report rates"),
        ("check-mesh", "print mesh quality constants; exit 1 on stiffness sign violations"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="flat key = value configuration file")
        if name != "check-mesh":
            p.add_argument("--output", help="CSV path (overrides the config's output key)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "check-mesh":
            report = cmd_check_mesh(cfg)
            print(report.format())
            return 0 if report.stiffness_offdiag_violations == 0 else 1
        if args.command == "run":
            rows = [cmd_run(cfg, args.output)]
        else:
            rows = cmd_convergence(cfg, args.output)
        print(format_rows(rows))
        return 0
    except (MeshError, ValueError, RuntimeError, OSError) as exc:
        print(f"llg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
