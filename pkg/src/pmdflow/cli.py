"""Command-line entry point.

Subcommands: simulate, pod, pmd, report, all. ``all`` accepts either one
config file or a directory of configs (the suite). Exit codes: 0 success,
1 runtime failure, 2 configuration validation failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path


def _add_case_flags(sub):
    sub.add_argument("config", help="case config file")
    sub.add_argument("--out", default=None, help="output root (default $PMDFLOW_OUT or ./pmdflow_out)")
    sub.add_argument("--profile", default="full", choices=("full", "ci"), help="resolution profile")
    sub.add_argument("--grid", default=None, metavar="NxM", help="override grid as n_radial x n_circ")
    sub.add_argument("--resume", action="store_true", help="skip stages whose artifacts are current")
    sub.add_argument("--seed", type=int, default=0, help="reserved; recorded for provenance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmdflow",
        description="Cylinder-flow simulation and pressure-mode decomposition pipeline",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("simulate", "run the flow solver and record the snapshot ensemble"),
        ("pod", "compute the POD basis from a recorded ensemble"),
        ("pmd", "surface-mode extraction and force decomposition"),
    ):
        sub = subs.add_parser(name, help=help_text)
        _add_case_flags(sub)

    sub = subs.add_parser("all", help="run the full pipeline for a config or a directory of configs")
    _add_case_flags(sub)
    sub.add_argument("-j", "--jobs", type=int, default=1, help="concurrent cases for a config directory")

    sub = subs.add_parser("report", help="cross-case regime summary and figures")
    sub.add_argument("out_dir", help="output root holding completed case directories")
    sub.add_argument("--cases", default=None, help="comma-separated case ids (default: all present)")
    sub.add_argument(
        "--require",
        default=None,
        help="comma-separated case ids that must be present (default: the four canonical cases)",
    )
    return parser


def _parse_grid(arg):
    if arg is None:
        return None
    try:
        n_radial, n_circ = (int(v) for v in arg.lower().split("x"))
        return (n_radial, n_circ)
    except ValueError:
        raise SystemExit(f"--grid expects NxM integers, got {arg!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    from . import pipeline, pmd
    from .errors import ConfigValidationError, GridValidationError, PmdflowError

    try:
        if args.command in ("simulate", "pod", "pmd"):
            pipeline.run_case(
                args.config,
                out_root=args.out,
                profile=args.profile,
                grid_override=_parse_grid(args.grid),
                resume=args.resume,
                seed=args.seed,
                stages=(args.command,),
            )
        elif args.command == "all":
            target = Path(args.config)
            if target.is_dir():
                n_failed, _ = pipeline.run_suite(
                    target,
                    out_root=args.out,
                    profile=args.profile,
                    grid_override=_parse_grid(args.grid),
                    resume=args.resume,
                    seed=args.seed,
                    parallelism=args.jobs,
                )
                if n_failed:
                    return 1
            else:
                pipeline.run_case(
                    target,
                    out_root=args.out,
                    profile=args.profile,
                    grid_override=_parse_grid(args.grid),
                    resume=args.resume,
                    seed=args.seed,
                )
        elif args.command == "report":
            cases = args.cases.split(",") if args.cases else None
            required = args.require.split(",") if args.require else pmd.CANONICAL_CASES
            pipeline.run_report(args.out_dir, cases=cases, required=required)
    except (ConfigValidationError, GridValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except PmdflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
