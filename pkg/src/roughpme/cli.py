"""Command line entry point: ``roughpme <experiment> --config FILE [--out DIR] [--workers N]``.

Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 verdict failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from . import experiments
from .config import EXPERIMENTS, load_config
from .errors import ConfigError, NumericalError, ParameterError, SolverError
from .report import ReportIOError, emit_report, export_trajectory

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERDICT = 0, 1, 2, 3

log = logging.getLogger("roughpme")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roughpme", description=__doc__.splitlines()[0])
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="flat key = value config file")
    parser.add_argument("--out", default=None, help="output directory (default: config 'out' or ./out)")
    parser.add_argument("--workers", type=int, default=1, help="worker processes")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if cfg.experiment != args.experiment:
            cfg = replace(cfg, experiment=args.experiment)
        if args.experiment == "contraction" and cfg.initial2 is None:
            raise ConfigError("contraction needs 'initial2'")
        if args.experiment == "cocycle" and cfg.split is None:
            raise ConfigError("cocycle needs 'split'")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.out or "out"
    try:
        if args.experiment == "solve":
            report, traj = experiments.run_solve(cfg, args.workers)
            export_trajectory(traj, os.path.join(out, "trajectory"))
        elif args.experiment == "diagnose":
            os.makedirs(out, exist_ok=True)
            report = experiments.run_diagnose(cfg, args.workers,
                                              snapshot_path=os.path.join(out, "kinetic_final.csv"))
        else:
            report = experiments.RUNNERS[args.experiment](cfg, args.workers)
        emit_report(report, out)
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, NumericalError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ReportIOError, OSError) as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for v in report.verdicts:
        status = "PASS" if v.passed else "FAIL"
        print(f"{status} {v.name}: {v.value:.6g} {v.relation} {v.threshold:.6g}")
    print(f"report written to {out}")
    return EXIT_OK if report.passed else EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
