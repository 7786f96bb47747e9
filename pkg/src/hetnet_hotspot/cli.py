"""Command-line entry point: ``hetnet-hotspot <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, parse_config, preset_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3


def _load(path: str | None) -> ExperimentConfig:
    """Config from an INI file, a run manifest (JSON), or the built-in preset."""
    if path is None:
        return preset_config()
    p = Path(path)
    if p.suffix == ".json":
        try:
            manifest = json.loads(p.read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{p}: cannot read manifest: {exc}") from None
        if "config_ini" not in manifest:
            raise ConfigError(f"{p}: not a run manifest (no config_ini)")
        return parse_config(manifest["config_ini"], f"{p}:config_ini")
    return load_config(p)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config or run manifest (default: built-in preset)")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--seed", type=int, help="override the base seed of [sim]")
    common.add_argument("--simulate", action="store_true",
                        help="add simulation / Monte Carlo columns where available")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")
    common.add_argument("--plot", action="store_true", help="also render PNG line charts (needs matplotlib)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="hetnet-hotspot",
        description="Throughput and load analytics of a macrocell with a hotspot-serving small cell.",
        epilog="Exit codes: 0 success, 2 configuration error, 3 validation failure.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("static-ccdf", parents=[common], help="throughput CCDFs per scenario")
    sub.add_parser("sweep-hotspot", parents=[common], help="mean throughput against hotspot distance")
    sub.add_parser("absorption", parents=[common], help="traffic shares against positioning error")
    sub.add_parser("dynamic", parents=[common], help="loads, flows and throughputs against arrival rate")
    sub.add_parser("validate", parents=[common], help="run the oracle checks")
    sub.add_parser("show-config", parents=[common], help="print the resolved configuration")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.sim.seed = args.seed

    from . import experiments as ex

    if args.command == "show-config":
        sys.stdout.write(cfg.to_ini())
        return EXIT_OK
    if args.command == "static-ccdf":
        w = ex.cmd_static_ccdf(cfg, args.out, jobs=args.jobs, plot=args.plot)
    elif args.command == "sweep-hotspot":
        w = ex.cmd_sweep_hotspot(cfg, args.out, jobs=args.jobs, plot=args.plot)
    elif args.command == "absorption":
        w = ex.cmd_absorption(cfg, args.out, simulate_mc=args.simulate, jobs=args.jobs, plot=args.plot)
    elif args.command == "dynamic":
        w = ex.cmd_dynamic(cfg, args.out, do_sim=args.simulate, jobs=args.jobs, plot=args.plot)
    else:
        w, passed = ex.cmd_validate(cfg, args.out, jobs=args.jobs)
        print(f"validation {'passed' if passed else 'FAILED'}: {w.out / 'validation_report.json'}")
        return EXIT_OK if passed else EXIT_VALIDATION
    print(f"wrote {len(w.manifest.outputs)} files to {w.out}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
