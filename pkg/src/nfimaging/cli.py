"""Command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import from_dict, load_config
from .errors import ImagingError
from .harness import _tables, design_plan, run_experiment


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nfimaging", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="more logging (repeat for debug)")
    parser.add_argument("-q", "--quiet", action="store_true", help="errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment grid")
    run.add_argument("-c", "--config", help="YAML scenario file (defaults if omitted)")
    run.add_argument("-o", "--output-dir", help="override output.dir")
    run.add_argument("-s", "--seed", type=int, action="append",
                     help="override experiment.seeds (repeatable)")
    run.add_argument("-p", "--pattern", action="append", choices=["uniform", "tcm", "ipm"],
                     help="only run these patterns (repeatable)")
    run.add_argument("--snr", type=float, action="append",
                     help="only run these SNR values in dB (repeatable)")
    run.add_argument("-j", "--workers", type=int, help="override experiment.workers")

    design = sub.add_parser("design", help="design one illumination plan and save it")
    design.add_argument("-c", "--config", help="YAML scenario file")
    design.add_argument("pattern", choices=["uniform", "tcm", "ipm"])
    design.add_argument("output", help="plan file to write")

    show = sub.add_parser("show-config", help="print the resolved configuration")
    show.add_argument("-c", "--config", help="YAML scenario file")
    return parser


def _apply_overrides(cfg, args):
    data = cfg.to_dict()
    if args.output_dir:
        data["output"]["dir"] = args.output_dir
    if args.seed:
        data["experiment"]["seeds"] = args.seed
    if args.pattern:
        data["illumination"]["patterns"] = args.pattern
    if args.snr:
        data["experiment"]["snr_db"] = args.snr
    if args.workers:
        data["experiment"]["workers"] = args.workers
    return from_dict(data)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    level = logging.ERROR if args.quiet else [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "show-config":
            sys.stdout.write(cfg.dump())
            return 0
        if args.command == "design":
            plan = design_plan(cfg, _tables(cfg), args.pattern)
            plan.save(args.output)
            return 0
        cfg = _apply_overrides(cfg, args)
        arts = run_experiment(cfg)
    except ImagingError as exc:
        logging.getLogger("nfimaging").error("%s", exc)
        return 2
    for row in arts.summary:
        print(f"{row['pattern']:>8s} {row['snr_db']:5.1f} dB  "
              f"PSNR {row['psnr_db_median']:6.2f}  SSIM {row['ssim_median']:.3f}  "
              f"IMMSE {row['immse_median']:.4f}  PCC {row['pcc_median']:.3f}")
    return 0 if arts.all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
