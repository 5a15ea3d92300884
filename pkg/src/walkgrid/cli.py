"""``walkgrid`` command-line entry point.

Exit codes: 0 success, 2 config or validation error, 3 data error,
4 degenerate statistics.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from walkgrid import _backend, pipeline
from walkgrid.config import load_config
from walkgrid.errors import (
    ConfigError,
    DegenerateFieldError,
    DegenerateWeightsError,
    WalkgridError,
)

log = logging.getLogger("walkgrid")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, pipeline.StageFailed):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (DegenerateFieldError, DegenerateWeightsError)):
        return EXIT_DEGENERATE
    return EXIT_DATA


def _peak_rss_mb() -> float | None:
    try:
        import resource
    except ImportError:  # not on every platform
        return None
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="path to a key = value config file")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: run.threads)")
    common.add_argument("--allow-degenerate", action="store_true",
                        help="map constant components to z = 0 instead of aborting")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="walkgrid", description="Grid-based walkability index pipeline.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in pipeline.STAGE_NAMES:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage")
    pp = sub.add_parser("pipeline", parents=[common], help="run all stages, skipping fresh ones")
    pp.add_argument("--force", action="store_true", help="rerun every stage")

    sp = sub.add_parser("synth", help="write a seeded synthetic city with a config file")
    sp.add_argument("out_dir", type=Path)
    sp.add_argument("--size", type=int, default=200, help="grid rows and columns")
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    t0 = time.perf_counter()
    try:
        if args.command == "synth":
            from walkgrid.synthetic import write_city
            cfg_path = write_city(args.out_dir, size=args.size, seed=args.seed)
            print(cfg_path)
            return EXIT_OK
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config)
        threads = args.threads or cfg.threads
        log.info("backend=%s threads=%d grid=%dx%d", _backend.BACKEND, threads,
                 cfg.grid.n_rows, cfg.grid.n_cols)
        if args.command == "pipeline":
            report = pipeline.cmd_pipeline(cfg, threads=threads, force=args.force,
                                           allow_degenerate=args.allow_degenerate)
            for stage, status in report.items():
                print(f"{stage}: {status}")
        else:
            entry = pipeline.run_single(cfg, args.command, threads=threads,
                                        allow_degenerate=args.allow_degenerate)
            print(f"{args.command}: ran in {entry['seconds']:.2f}s")
    except (WalkgridError, OSError) as exc:
        log.error("%s", exc)
        return exit_code_for(exc)
    rss = _peak_rss_mb()
    log.info("finished in %.2fs%s", time.perf_counter() - t0,
             f", peak RSS {rss:.0f} MB" if rss is not None else "")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
