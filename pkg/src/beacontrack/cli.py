"""Command-line entry point: ``beacontrack {run,tune,sweep,compare}``.

Exit codes: 0 success, 2 configuration error, 3 acquisition failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config, parse_config_text
from .errors import AcquisitionError, ConfigError
from .runner import compare_power_settings, emit_figures_data, run_experiment, run_sweep, tune_from_calibration_pass

log = logging.getLogger("beacontrack")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ACQUISITION = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beacontrack", description="Beacon tracking and key-rate simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat section.key = value config file")
    common.add_argument("--seed", type=int, help="overrides run.seed")
    common.add_argument("--out", type=Path, help="output directory (overrides run.out_dir)")
    common.add_argument("--dump-frames", action="store_true", help="write PGM frames and pipeline stages")
    common.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("run", parents=[common], help="run a single experiment")
    sub.add_parser("tune", parents=[common], help="grid-search filter noise on a calibration pass")
    sub.add_parser("sweep", parents=[common], help="key rate vs channel loss")
    cmp_ = sub.add_parser("compare", parents=[common], help="paired low/high beacon power runs")
    cmp_.add_argument("--seeds", type=int, help="number of paired seeds (overrides compare.seeds)")
    return parser


def _load(args):
    overrides = {}
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.out is not None:
        overrides["run.out_dir"] = str(args.out)
    if args.dump_frames:
        overrides["run.dump_frames"] = True
    if args.config is None:
        return parse_config_text("", overrides)
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _load(args)
        if args.command == "run":
            report = run_experiment(cfg)
            emit_figures_data([report], None, Path(cfg.run.out_dir) / "figures")
            print(f"rms_px={report.rms_px:.6f} rms_mrad={report.rms_mrad:.6f} "
                  f"frames={report.frames_processed} handoffs={report.handoffs} "
                  f"wall_time_s={report.wall_time_s:.2f}")
        elif args.command == "tune":
            best = tune_from_calibration_pass(cfg)
            print(f"q={best.q:g} r={best.r:g} rms_px={best.rms:.6f}")
        elif args.command == "sweep":
            rows = run_sweep(cfg)
            emit_figures_data([], rows, Path(cfg.run.out_dir) / "figures")
            print(f"wrote {len(rows)} rows to {Path(cfg.run.out_dir) / 'sweep.csv'}")
        elif args.command == "compare":
            n = args.seeds if args.seeds is not None else cfg.compare.seeds
            seeds = range(cfg.seed, cfg.seed + n)
            rows = compare_power_settings(
                cfg.with_power(cfg.compare.low_power), cfg.with_power(cfg.compare.high_power), seeds
            )
            ordered = sum(1 for r in rows if r[1] >= r[2])
            print(f"rms_low >= rms_high in {ordered}/{len(rows)} pairs")
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except AcquisitionError as exc:
        print(f"acquisition failed: {exc}", file=sys.stderr)
        return EXIT_ACQUISITION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
