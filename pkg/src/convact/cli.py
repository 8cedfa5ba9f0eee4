"""Command-line entry point.

::

    convact run study.json [--out DIR] [--threads N] [--max-free-nodes K]
    convact identities [--grids 128,256,512]

Exit status is 0 on success, 2 when the input is rejected (bad config, bad
flags, a grid above the dense-solve cap) and 3 when a solve fails.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence

from convact.errors import ConfigError, SystemTooLargeError
from convact.experiments import (
    ExperimentConfig,
    ExperimentFailure,
    ExperimentKind,
    format_table,
    load_config,
    run,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3


def _grid_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("grid list is empty")
    return values


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convact",
        description="Convolved action functionals: identity checks and solver convergence studies.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="directory for the report and CSV (default: .)")
    common.add_argument(
        "--threads", type=_positive, default=None,
        help="grids solved concurrently (default: $CONVACT_THREADS or 1)",
    )

    p_run = sub.add_parser("run", parents=[common], help="run the study described by a JSON config")
    p_run.add_argument("config", help="path to the JSON config")
    p_run.add_argument(
        "--max-free-nodes", type=_positive, default=None,
        help="override the dense-solve cap on free nodes",
    )

    p_id = sub.add_parser("identities", parents=[common], help="run the convolution and half-order identity suite")
    p_id.add_argument(
        "--grids", type=_grid_list, default=[128, 256, 512],
        help="comma-separated interval counts (default: 128,256,512)",
    )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which matches our validation code
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "run":
            config = load_config(args.config)
            report = run(config, out_dir=args.out, threads=args.threads, max_free_nodes=args.max_free_nodes)
        else:
            config = ExperimentConfig(kind=ExperimentKind.IDENTITIES, grids=tuple((n,) for n in args.grids))
            report = run(config, out_dir=args.out, threads=args.threads)
    except (ConfigError, SystemTooLargeError, FileNotFoundError) as exc:
        print(f"convact: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ExperimentFailure, RuntimeError) as exc:
        print(f"convact: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(format_table(report))
    print(f"\nwrote {args.out}/{config.output}_report.json and {args.out}/{config.output}_data.csv")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
