"""Command-line entry point: ``multistable {simulate,estimate,reproduce,analyze}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import (PRESETS, ConfigError, InputError, cmd_analyze, cmd_estimate,
                      cmd_reproduce, cmd_simulate, load_config, make_estimator_config)

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3, 4

log = logging.getLogger("multistable")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multistable", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", type=Path, required=config_required, help="INI experiment file")
        p.add_argument("--seed", type=_u64, help="overrides the config seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes/threads")
        p.add_argument("--out", type=Path, help="output directory")

    p = sub.add_parser("simulate", help="simulate paths from a config")
    common(p, config_required=True)

    p = sub.add_parser("estimate", help="estimate H and alpha along path CSVs")
    common(p)
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("--n-window", type=int, help="alpha window (even)")
    p.add_argument("--n-window-h", type=int, help="H window (even)")
    p.add_argument("--t0-count", type=int, default=81)
    p.add_argument("--t0-start", type=float)
    p.add_argument("--t0-end", type=float)
    p.add_argument("--policy", choices=("error", "shrink-window"), default="error")

    p = sub.add_parser("reproduce", help="run a figure preset end to end")
    common(p)
    p.add_argument("figure", choices=sorted(PRESETS))
    p.add_argument("--full", action="store_true", help="use the full-scale N of the preset")
    p.add_argument("--replications", type=int)

    p = sub.add_parser("analyze", help="integrate a raw series and estimate H and alpha")
    common(p)
    p.add_argument("input", type=Path)
    p.add_argument("--n-window", type=int, help="default: len/40 rounded down to even")
    p.add_argument("--t0-count", type=int, default=101)
    return parser


def _run(args) -> int:
    if args.command == "simulate":
        spec = load_config(args.config, seed=args.seed, out=args.out)
        for f in cmd_simulate(spec, jobs=args.jobs):
            print(f)
        return EXIT_OK

    if args.command == "reproduce":
        report = cmd_reproduce(args.figure, seed=args.seed or 0, full=args.full,
                               out=args.out or Path("out"), jobs=args.jobs,
                               replications=args.replications)
        print(json.dumps(report["summary"], indent=2, sort_keys=True))
        return EXIT_OK

    if args.command == "estimate":
        if args.config:
            spec = load_config(args.config, seed=args.seed or 0, out=args.out)
            config, out = spec.estimator, spec.outputs
        elif args.n_window:
            config = make_estimator_config(args.n_window, args.n_window_h,
                                           boundary_policy=args.policy)
            out = args.out or Path("out")
        else:
            raise ConfigError("estimate needs --n-window or --config")
        t0 = None
        if args.t0_start is not None or args.t0_end is not None:
            if args.t0_start is None or args.t0_end is None:
                raise ConfigError("--t0-start and --t0-end go together")
            from .estimators import t0_grid
            t0 = t0_grid(args.t0_count, args.t0_start, args.t0_end)
        results = cmd_estimate(args.inputs, config, t0_values=t0, out=out, jobs=args.jobs,
                               t0_count=args.t0_count)
        ok = 0
        for target, series in results:
            print(target)
            ok += int(series.ok.sum())
        return EXIT_OK if ok else EXIT_RUNTIME

    if args.command == "analyze":
        base = load_config(args.config, seed=0).estimator if args.config else None
        target, series = cmd_analyze(args.input, n_window=args.n_window,
                                     out=args.out or Path("out"), t0_count=args.t0_count,
                                     jobs=args.jobs, base=base)
        print(target)
        return EXIT_OK if series.ok.any() else EXIT_RUNTIME
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
