"""
Command line entry point::

    sqgdet simulate|determine|sync|degiorgi|sweep --config FILE [--out DIR] [--workers N] [--seed S]

Exit codes: 0 success, 2 invalid config, 3 numerical failure (blow-up, undefined
determining wavenumber, no admissible r), 4 I/O error, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import EXPERIMENTS, ConfigError, parse_config
from .runner import NUMERICAL, run, sweep

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3, 4


def _exit_code(statuses) -> int:
    statuses = set(statuses)
    if statuses <= {"ok"}:
        return EXIT_OK
    if "io_error" in statuses:
        return EXIT_IO
    if statuses & set(NUMERICAL):
        return EXIT_NUMERICAL
    return EXIT_OTHER


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sqgdet", description="SQG determining-modes experiments")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="JSON config file")
    ap.add_argument("--out", default=None, help="output root (default: config output.dir)")
    ap.add_argument("--workers", type=int, default=None, help="sweep worker processes")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text, experiment=args.experiment, seed=args.seed)
    except json.JSONDecodeError as e:
        print(f"error: config is not valid JSON: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out or cfg.output_dir
    try:
        if cfg.experiment == "sweep":
            records = sweep(cfg.members, out, workers=args.workers, root_cfg=cfg)
        else:
            records = [run(cfg, out)]
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    for rec in records:
        print(rec.to_json())
        if rec.error:
            print(f"{rec.experiment} {rec.config_hash[:12]} {rec.status}: {rec.error}", file=sys.stderr)
    return _exit_code(r.status for r in records)


if __name__ == "__main__":
    sys.exit(main())
