"""Command line entry point: ``blhc solve|trace|metrics|compare``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .discretization import HomotopyKind
from .experiments import RunFailure, compare_homotopies, run_metrics, run_solve, run_trace, write_csv
from .scenario import ConfigError, load_scenario

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_TRACE = 0, 2, 3, 4

logger = logging.getLogger("blhc")


def _parser():
    parser = argparse.ArgumentParser(prog="blhc", description=__doc__)
    parser.add_argument("command", choices=["solve", "trace", "metrics", "compare"])
    parser.add_argument("--scenario", required=True, help="scenario TOML file or bundled scenario name")
    parser.add_argument("--out", required=True, type=Path, help="output directory")
    parser.add_argument("--homotopy", choices=[k.value for k in HomotopyKind], help="override homotopy.kind")
    parser.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a scenario entry, e.g. time.cfl=2.0 (repeatable)",
    )
    parser.add_argument(
        "--kinds",
        nargs="+",
        default=[k.value for k in HomotopyKind],
        help="homotopy kinds for 'compare'",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = list(args.override)
    if args.homotopy:
        overrides.append(f'homotopy.kind="{args.homotopy}"')
    try:
        scenario = load_scenario(args.scenario, overrides)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    args.out.mkdir(parents=True, exist_ok=True)
    kind = scenario.homotopy.kind.value
    stem = f"{scenario.name}_{kind}"
    runners = {"solve": run_solve, "trace": run_trace, "metrics": run_metrics}
    try:
        if args.command == "compare":
            table, per_kind = compare_homotopies(scenario, args.kinds)
            for k, solve_table in per_kind.items():
                write_csv(solve_table, args.out / f"{scenario.name}_{k}_solve.csv")
            path = args.out / f"{scenario.name}_compare.csv"
            write_csv(table, path)
        else:
            table = runners[args.command](scenario)
            path = args.out / f"{stem}_{args.command}.csv"
            write_csv(table, path)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except RunFailure as err:
        if err.table is not None:
            path = args.out / f"{stem}_{args.command}.csv"
            write_csv(err.table, path)
            print(f"partial output written to {path}", file=sys.stderr)
        print(f"{args.command} failed: {err}", file=sys.stderr)
        return err.exit_code
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
