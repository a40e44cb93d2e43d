"""Command-line entry point: ``kslab <scenario> --config FILE [--out DIR]``.

Exit status is 0 when every asserted measurement passes, 1 when one
fails, 2 for configuration errors and 3 when a computation aborts.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .runner import KINDS, ConfigError, load_config, run_scenario
from .solver import SolverError
from .fronts import AnalysisError
from .waves import WaveError


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kslab", description="Chemotaxis front and wave experiments.")
    sub = ap.add_subparsers(dest="kind", required=True, metavar="scenario")
    helps = {
        "simulate": "integrate the system and export the trajectory",
        "speed": "estimate front speeds from a simulation",
        "wave": "construct a traveling-wave profile",
        "sweep": "repeat a scenario over a list of parameter values",
        "kernel-selftest": "check the fast kernel against its oracle",
    }
    for kind in KINDS:
        sp = sub.add_parser(kind, help=helps[kind])
        sp.add_argument("--config", required=True, help="scenario file (INI)")
        sp.add_argument("--out", default=None, help="output directory for CSV files and report.txt")
        sp.add_argument("--refine", action="store_true", help="repeat at h/2 and report the changes")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, kind=args.kind)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_scenario(cfg, args.out, refine=args.refine, jobs=args.jobs)
    except (SolverError, WaveError, AnalysisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(report.render())
    print(f"wall-clock: {report.wall_clock:.2f} s")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
