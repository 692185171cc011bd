"""Command line interface: ``msirl run``, per-stage commands and ``report``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import pipeline, report
from .config import ExperimentConfig
from .errors import ArtifactError, ConfigError, MsirlError

log = logging.getLogger("msirl")


def _thread_limit():
    raw = os.environ.get("MSIRL_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MSIRL_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("MSIRL_THREADS must be >= 0")
    if n == 0:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def build_parser():
    p = argparse.ArgumentParser(prog="msirl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run every stage from a config file")
    run.add_argument("config")
    run.add_argument("--out", help="override output_dir from the config")
    for name in pipeline.STAGES:
        sp = sub.add_parser(name, help=f"run the {name} stage")
        sp.add_argument("--in", dest="in_dir", required=True)
        sp.add_argument("--out", dest="out_dir", required=True)
        sp.add_argument("--config", help="config JSON (default: <in>/config.json)")
    rep = sub.add_parser("report", help="render levels table and heatmaps")
    rep.add_argument("--in", dest="in_dir", required=True)
    rep.add_argument("--out", dest="out_dir")
    rep.add_argument("--pixels-per-unit", type=int, default=16)
    return p


def _dispatch(args):
    if args.command == "run":
        cfg = ExperimentConfig.load(args.config)
        out = pipeline.run_pipeline(cfg, args.out)
        print(report.format_levels(_read_levels(out)))
        return
    if args.command == "report":
        print(report.render(args.in_dir, args.out_dir, args.pixels_per_unit))
        return
    cfg_path = Path(args.config) if args.config else Path(args.in_dir) / "config.json"
    cfg = ExperimentConfig.load(cfg_path)
    pipeline.run_stage(args.command, cfg, args.in_dir, args.out_dir)


def _read_levels(out):
    from . import artifacts

    return artifacts.read_table(Path(out) / "levels.csv")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        limit = _thread_limit()
        try:
            _dispatch(args)
        finally:
            if limit is not None:
                limit.unregister()
    except MsirlError as exc:
        print(f"msirl {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"msirl {args.command}: I/O error: {exc}", file=sys.stderr)
        return ArtifactError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
