"""Command-line entry points.

Every experiment subcommand takes a TOML config file and writes CSV/JSON
(and optional SVG) outputs into the configured directory. Exit codes:
0 success, 1 configuration error, 2 runtime error, 3 a checked inequality
or internal consistency assertion failed.
"""

from __future__ import annotations

import argparse
import sys

from . import harness
from .harness import ConfigError, load_config
from .towers import TowerSizeError, build_tower

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_ASSERTION = 3


def _add_config_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="TOML experiment config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="towersep",
        description="Exclusion processes on towers of covering graphs: "
        "simulation and exact verification experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-tower", help="build the quotient tower and export edge lists")
    _add_config_arg(p)

    p = sub.add_parser("superexp", help="exceedance probabilities across the tower")
    _add_config_arg(p)

    p = sub.add_parser("one-block", help="local-average vs empirical-density estimates")
    _add_config_arg(p)

    p = sub.add_parser("two-blocks", help="density differences between distant windows")
    _add_config_arg(p)

    p = sub.add_parser("folner-report", help="Folner ratios and averaging deviations")
    _add_config_arg(p)

    p = sub.add_parser("spectral-check", help="Feynman-Kac bound margins on small levels")
    _add_config_arg(p)

    p = sub.add_parser("path-lemma", help="moving-particle inequality on invariant functions")
    _add_config_arg(p)
    p.add_argument("--functions", type=int, default=100)

    return parser


def _run_build_tower(cfg) -> list:
    tower = build_tower(cfg.tower_spec(), max(cfg.levels))
    outdir = harness.output_dir(cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for g in tower:
        path = outdir / f"edges_level_{g.level}.csv"
        g.export_edge_list(path)
        written.append(path)
    return written


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    runners = {
        "superexp": harness.run_superexp,
        "one-block": harness.run_one_block,
        "two-blocks": harness.run_two_blocks,
        "folner-report": harness.run_folner_report,
        "spectral-check": harness.run_spectral_check,
    }
    try:
        if args.command == "build-tower":
            written = _run_build_tower(cfg)
        elif args.command == "path-lemma":
            report = harness.run_path_lemma(cfg, functions=args.functions)
            if report.rows[0]["violations"]:
                harness.emit_outputs([report], harness.output_dir(cfg), cfg.svg)
                print("path lemma violated on invariant functions", file=sys.stderr)
                return EXIT_ASSERTION
            written = harness.emit_outputs([report], harness.output_dir(cfg), cfg.svg)
        else:
            report = runners[args.command](cfg)
            written = harness.emit_outputs([report], harness.output_dir(cfg), cfg.svg)
    except (ConfigError, TowerSizeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssertionError as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERTION
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
