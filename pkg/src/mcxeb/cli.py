"""Command-line entry point.

Subcommands: sweep, convergence, delta-m, entropy, train, chi, gradcheck.
Each takes a versioned JSON config (--config), an output directory (--out,
defaulting to $MCXEB_OUT_ROOT/<experiment> or ./out/<experiment>), a seed
override (--seed), a worker count (--workers), and for sweep/chi an
estimator override (--estimator).

Exit codes: 0 success, 1 config error, 2 runtime failure, 3 partial-failure
threshold exceeded.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from .errors import ConfigError, McxebError
from .orchestrator import EXPERIMENTS, RunResult, load_config, write_manifest

OUT_ROOT_ENV = "MCXEB_OUT_ROOT"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcxeb",
        description="Cross-entropy benchmark experiments for monitored circuits",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=1, help="process pool size")
        p.add_argument(
            "--estimator",
            choices=["exact", "histogram", "rnn"],
            default=None,
            help="override the config estimator (sweep, chi)",
        )
    return parser


def _outdir(args) -> str:
    if args.out:
        return args.out
    root = os.environ.get(OUT_ROOT_ENV, "out")
    return os.path.join(root, args.command)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg["experiment"] != args.command:
            raise ConfigError(
                f"config is for {cfg['experiment']!r}, command is {args.command!r}"
            )
        if args.estimator:
            cfg = dict(cfg, estimator=args.estimator)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        outdir = _outdir(args)
        os.makedirs(outdir, exist_ok=True)
    except (ConfigError, OSError, KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    start = time.monotonic()
    try:
        result: RunResult = EXPERIMENTS[args.command](cfg, outdir, seed, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        # partial-failure threshold exceeded (sweep) or all trainings diverged
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except (McxebError, Exception) as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME

    write_manifest(outdir, cfg, seed, args.workers, result, time.monotonic() - start)
    print(f"{args.command}: wrote {len(result.files)} file(s) to {outdir}")
    if result.failures:
        print(f"warning: {result.failures} task(s) failed; see manifest notes")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
