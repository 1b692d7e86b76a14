"""``spbench`` command line.

    spbench synth   --out data.csv [--config exp.ini] [--seed N]
    spbench prepare|shift|split|run|report|all --config exp.ini [--seed N] [--out DIR] [--jobs N]

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
failure, 5 missing stage artifacts, 6 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import ConfigError, SpbenchError
from .pipeline import STAGES, run_pipeline
from .protocol import SpReport
from .synth import SynthConfig, generate, to_csv

IO_ERROR = 6


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment config (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="master seed, overrides [experiment] seed")
    common.add_argument("--out", help="output directory, overrides [experiment] out")
    common.add_argument("--jobs", type=int, help="evaluation worker threads")
    common.add_argument("--shift-fraction", type=float, help="overrides [shift] fraction")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="spbench", description="Stability/plasticity benchmark for recommenders.")
    parser.add_argument("--version", action="version", version=f"spbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in (*STAGES, "all"):
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage" if stage != "all" else "run every stage")
    sub.add_parser("synth", parents=[common], help="write a synthetic interaction CSV")
    return parser


def resolve_config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out = args.out
    if args.jobs is not None:
        config.jobs = args.jobs
    if args.shift_fraction is not None:
        config.shift_fraction = args.shift_fraction
    return config.validate(check_paths=args.command in ("prepare", "all"))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        config = resolve_config(args)
        if args.command == "synth":
            synth = SynthConfig(**{**config.synth, "seed": config.seed if args.seed is not None else config.synth["seed"]})
            target = args.out or "synthetic.csv"
            os.makedirs(os.path.dirname(os.path.abspath(target)), exist_ok=True)
            with open(target, "w", newline="", encoding="utf-8") as f:
                to_csv(generate(synth), f)
            print(target)
            return 0
        run_pipeline(config, args.command, config.out, config.jobs)
        if args.command in ("run", "all", "report"):
            report_path = os.path.join(config.out, "run", "report.json")
            report = SpReport.read(report_path)
            failed = [r.name for r in report.results if not r.ok]
            if failed:
                print(f"training failed for: {', '.join(failed)}", file=sys.stderr)
                return 4
        return 0
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return exc.exit_code
    except SpbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return IO_ERROR


if __name__ == "__main__":
    sys.exit(main())
