"""Command-line entry point: ``bhchain {run,analytic,oracle,compare}``.

Exit statuses: 0 success, 2 configuration error, 3 too many diverged
trajectories, 4 comparison failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .analytic import NoAnalyticSolution, analytic_series
from .compare import CompareError, compare_files, format_report
from .io import apply_overrides, format_series, manifest_path, read_config, write_manifest, write_series
from .model import ChainConfig, ConfigError, validate
from .oracle import BasisTooLarge, oracle_series
from .sde import DEFAULT_SCHEME, SCHEMES, DivergenceError, run_ensemble

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_COMPARE = 4

log = logging.getLogger("bhchain")


def _load(args) -> ChainConfig:
    config = read_config(args.config) if args.config else ChainConfig()
    config = apply_overrides(config, args.set)
    if getattr(args, "traj", None) is not None:
        config = config.replace(n_traj=args.traj)
    if getattr(args, "seed", None) is not None:
        config = config.replace(seed=args.seed)
    return validate(config)


def _emit(series, args, command, config, **manifest):
    if args.out is None:
        sys.stdout.write(format_series(series))
        return
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_series(series, out)
    mpath = manifest_path(out)
    write_manifest(mpath, command=command, config=config, version=__version__,
                   outputs=[out], **manifest)
    log.info("wrote %s and %s", out, mpath)


def cmd_run(args) -> int:
    config = _load(args)
    start = time.perf_counter()
    try:
        result = run_ensemble(config, scheme=args.scheme, workers=args.workers)
    except DivergenceError as exc:
        print(f"divergence failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    wall = time.perf_counter() - start
    _emit(result.series(), args, "run", config, scheme=args.scheme, wall_time=wall,
          n_diverged=result.n_diverged, workers=args.workers)
    return EXIT_OK


def cmd_analytic(args) -> int:
    config = _load(args)
    start = time.perf_counter()
    series = analytic_series(config)
    _emit(series, args, "analytic", config, wall_time=time.perf_counter() - start)
    return EXIT_OK


def cmd_oracle(args) -> int:
    config = _load(args)
    start = time.perf_counter()
    series = oracle_series(config)
    _emit(series, args, "oracle", config, wall_time=time.perf_counter() - start)
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        report = compare_files(args.a, args.b, sigma=args.sigma, min_fraction=args.min_fraction, atol=args.atol)
    except (CompareError, ValueError, OSError) as exc:
        print(f"comparison error: {exc}", file=sys.stderr)
        return EXIT_COMPARE
    print(format_report(report))
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK if report["pass"] else EXIT_COMPARE


def _config_args(p):
    p.add_argument("--config", help="flat TOML file with ChainConfig fields")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", default=[],
                   help="override a config field (repeatable)")
    p.add_argument("--out", help="CSV path; a .manifest.json is written next to it (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bhchain", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="positive-P ensemble integration")
    _config_args(p)
    p.add_argument("--scheme", choices=sorted(SCHEMES), default=DEFAULT_SCHEME)
    p.add_argument("--traj", type=int, help="number of trajectories (overrides n_traj)")
    p.add_argument("--seed", type=int, help="RNG seed (overrides seed)")
    p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analytic", help="closed-form non-interacting curves (2 or 3 wells)")
    _config_args(p)
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("oracle", help="exact small-N Fock-basis propagation")
    _config_args(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", help="compare two series CSVs")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--sigma", type=float, default=3.0)
    p.add_argument("--min-fraction", type=float, default=0.99)
    p.add_argument("--atol", type=float, default=1e-8)
    p.add_argument("--json", help="write the machine-readable report here")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, NoAnalyticSolution, BasisTooLarge) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
