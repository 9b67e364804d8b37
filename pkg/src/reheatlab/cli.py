"""Command-line interface.

Verbs: ``schedule dump``, ``run``, ``ablation``, ``ssc``, ``pareto``,
``calibrate``.  Every verb reads an optional config file, applies the
``--seed`` override, writes its outputs under ``--out``, and exits 0 on
success.  Failures print a machine-readable error JSON to stdout and
exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .harness import (
    cmd_ablation,
    cmd_calibrate,
    cmd_pareto,
    cmd_run,
    cmd_schedule_dump,
    cmd_ssc,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="experiment config file")
    parser.add_argument("--seed", type=int, default=None, help="override the run base seed")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--workers", type=int, default=1, help="parallel workers for grid cells")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reheatlab",
                                     description="Non-monotonic noise-schedule laboratory")
    sub = parser.add_subparsers(dest="verb", required=True)

    schedule = sub.add_parser("schedule", help="schedule inspection")
    schedule_sub = schedule.add_subparsers(dest="schedule_verb", required=True)
    _add_common(schedule_sub.add_parser("dump", help="write schedule CSVs"))

    for verb, help_text in (
        ("run", "sample and score the configured schedule against its control"),
        ("ablation", "position x magnitude single-reheat grid"),
        ("ssc", "schedule sensitivity coefficient report"),
        ("pareto", "quality/budget sweep over the standard method variants"),
        ("calibrate", "adaptive-reheat threshold calibration"),
    ):
        _add_common(sub.add_parser(verb, help=help_text))

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {} if args.seed is None else {"base_seed": args.seed}
        config = load_config(args.config, overrides)
        out_dir = args.out
        if args.verb == "schedule":
            written = cmd_schedule_dump(config, out_dir)
        elif args.verb == "run":
            written = cmd_run(config, out_dir)
        elif args.verb == "ablation":
            written = cmd_ablation(config, out_dir, workers=args.workers)
        elif args.verb == "ssc":
            written = cmd_ssc(config, out_dir)
        elif args.verb == "pareto":
            written = cmd_pareto(config, out_dir)
        else:
            written = cmd_calibrate(config, out_dir)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True))
        return 1
    for path in written:
        print(path.name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
