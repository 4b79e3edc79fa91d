from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from ribaucour.config import COMMANDS, load_run_config
from ribaucour.exceptions import ConfigError, RibaucourError

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ribaucour",
        description=(
            "Run a vectorial Ribaucour construction or verification from a JSON "
            "config. Use 'gallery' to list the bundled demo configs."
        ),
    )
    parser.add_argument(
        "command",
        choices=COMMANDS + ("gallery",),
        help="Command to run; must match the config's 'command' field.",
    )
    parser.add_argument(
        "--config",
        type=Path,
        help="Path to the run configuration (JSON).",
    )
    parser.add_argument(
        "--out",
        type=Path,
        default=None,
        help="Output directory (overrides the config's 'output').",
    )
    parser.add_argument(
        "--tol-scale",
        dest="tol_scale",
        type=float,
        default=None,
        help="Global multiplier applied to every tolerance.",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Seed recorded in the report (overrides the config's 'seed').",
    )
    return parser


def _print_gallery() -> int:
    from ribaucour.gallery import demo_gallery

    for name, path in sorted(demo_gallery().items()):
        sys.stdout.write(f"{name}\t{path}\n")
    return EXIT_OK


def _print_summary(report, output: Path) -> None:
    failed = report.failed_checks()
    sys.stdout.write(
        f"{report.command}: {len(report.checks)} checks, {len(failed)} failed "
        f"-> {output}\n"
    )
    for check in failed:
        detail = f" ({check.detail})" if check.detail else ""
        sys.stdout.write(
            f"  FAILED {check.name}: {check.residual:.3e} > "
            f"{check.tolerance:.3e}{detail}\n"
        )


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args, unknown = parser.parse_known_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_CONFIG
        return EXIT_CONFIG if code else code

    if unknown:
        unknown_str = " ".join(unknown)
        print(
            f"ribaucour: warning: unsupported arguments: {unknown_str}",
            file=sys.stderr,
        )
        return EXIT_CONFIG

    if args.command == "gallery":
        return _print_gallery()
    if args.config is None:
        print("ribaucour: --config is required", file=sys.stderr)
        return EXIT_CONFIG

    from ribaucour.router import run

    try:
        config = load_run_config(
            args.config, tol_scale=args.tol_scale, seed=args.seed, output=args.out
        )
        if config.command != args.command:
            raise ConfigError(
                f"Config is for '{config.command}', not '{args.command}'",
                location="command",
            )
        report = run(config)
    except ConfigError as exc:
        print(f"ribaucour: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RibaucourError as exc:
        print(f"ribaucour: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    _print_summary(report, config.output)
    return EXIT_OK if report.passed else EXIT_CHECKS_FAILED


if __name__ == "__main__":
    raise SystemExit(main())
