"""
Command-line entry point.

    python -m mapcalc <command> [--config FILE] [--preset NAME] [--p P] [--q Q]
                                [--seed S] [--h H] [--output-dir DIR]
    python -m mapcalc sweep --configs A.toml B.toml --workers N

Exit status: 0 when every check passes, 1 when a check fails, 2 for
configuration errors, 3 for anything else.
"""

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from .commands import COMMANDS, Experiment
from .config import Defaults, ExperimentConfig, apply_overrides, get_settings, load_defaults, load_experiment, parse_spacing
from .dependencies import init_report_store, reset_report_store
from .exceptions import ConfigurationError
from .logging_config import setup_logging
from .schemas import CheckResult, Report

logger = logging.getLogger(__name__)

EXIT_PASSED = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_INTERNAL = 3


def _spacing(value: str) -> float:
    try:
        return parse_spacing(value)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mapcalc",
        description="Discrete map calculus on Riemannian charts: variation, stress and Liouville checks",
    )
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ERROR or CRITICAL")
    parser.add_argument("--log-format", choices=["json", "text"], default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in sorted(COMMANDS):
        cmd = sub.add_parser(name, help=(COMMANDS[name].__doc__ or "").strip().split("\n")[0] or None)
        cmd.add_argument("--config", type=Path, default=None, help="experiment TOML file")
        cmd.add_argument("--preset", default=None, help="source manifold preset")
        cmd.add_argument("--p", type=float, default=None)
        cmd.add_argument("--q", type=float, default=None)
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--h", type=_spacing, default=None, help="grid spacing, e.g. 1/64")
        cmd.add_argument("--no-refine", action="store_true", help="skip the h/2 refinement rung")
        cmd.add_argument("--output-dir", type=Path, default=None)

    sweep = sub.add_parser("sweep", help="run several experiment files concurrently")
    sweep.add_argument("--configs", type=Path, nargs="+", required=True)
    sweep.add_argument("--workers", type=int, default=2)
    sweep.add_argument("--output-dir", type=Path, default=None)
    return parser


def overrides_from(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "command": args.command,
        "manifold.preset": args.preset,
        "manifold.h": args.h,
        "params.p": args.p,
        "params.q": args.q,
        "map.seed": args.seed,
        "params.refine": False if args.no_refine else None,
    }


def output_directory(config: ExperimentConfig, override: Optional[Path] = None) -> Path:
    if override is not None:
        return Path(override)
    if config.output.directory is not None:
        return Path(config.output.directory)
    return get_settings().output_dir


def execute(name: str, config: ExperimentConfig, defaults: Defaults, output_dir: Path) -> int:
    """Run one command and store its report; returns the exit status."""
    if name not in COMMANDS:
        raise ConfigurationError(f"Unknown command: {name}")
    store = init_report_store(output_dir, write_csv=config.output.csv)
    result = COMMANDS[name](Experiment(config, defaults))
    store.put(result.report, result.rows)
    failed = result.report.failed_checks()
    for check in failed:
        logger.warning(
            "Check failed",
            extra={"command": name, "check": check.name, "value": check.value, "tolerance": check.tolerance},
        )
    logger.info("Command finished", extra={"command": name, "passed": not failed, "checks": len(result.report.checks)})
    return EXIT_PASSED if not failed else EXIT_FAILED


def _guarded(run) -> int:
    try:
        return run()
    except (ConfigurationError, ValidationError) as e:
        logger.error(f"Configuration error: {str(e)}", extra={"error": str(e)})
        return EXIT_CONFIG
    except Exception as e:
        logger.error(f"Unhandled exception: {str(e)}", extra={"error": str(e)}, exc_info=True)
        return EXIT_INTERNAL


def run_config(path: Path, output_dir: Path, defaults: Defaults) -> int:
    """Run the command named inside an experiment file."""

    def run() -> int:
        config = load_experiment(path)
        if config.command is None:
            raise ConfigurationError(f"{path} names no command")
        reset_report_store()
        return execute(config.command, config, defaults, output_dir)

    return _guarded(run)


def _sweep_worker(path: str, output_dir: str, log_level: str, log_format: str) -> Tuple[str, int]:
    setup_logging(log_level, log_format)
    return path, run_config(Path(path), Path(output_dir), load_defaults())


def run_sweep(
    configs: Sequence[Path],
    workers: int,
    output_dir: Path,
    log_level: str,
    log_format: str,
) -> int:
    """Each config runs in its own process and writes under ``<output>/<config stem>/``."""
    stems = [Path(c).stem for c in configs]
    if len(set(stems)) != len(stems):
        raise ConfigurationError("sweep configs must have distinct file names")
    results: List[Tuple[str, int]] = []
    with ProcessPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [
            pool.submit(_sweep_worker, str(c), str(output_dir / Path(c).stem), log_level, log_format)
            for c in configs
        ]
        for future in futures:
            results.append(future.result())

    checks = [
        CheckResult(name=Path(path).stem, value=float(code), tolerance=0.0, passed=code == EXIT_PASSED,
                    detail=str(path))
        for path, code in results
    ]
    reset_report_store()
    init_report_store(output_dir).put(Report(command="sweep", checks=checks, data={"workers": workers}))
    worst = max((code for _, code in results), default=EXIT_PASSED)
    logger.info("Sweep finished", extra={"configs": len(results), "exit": worst})
    return worst


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        defaults = load_defaults()
    except ConfigurationError as e:
        setup_logging()
        logger.error(f"Configuration error: {str(e)}")
        return EXIT_CONFIG
    log_level = (args.log_level or defaults.logging.level).upper()
    log_format = args.log_format or defaults.logging.format
    setup_logging(log_level, log_format)

    if args.command == "sweep":
        return _guarded(lambda: run_sweep(
            args.configs, args.workers, args.output_dir or get_settings().output_dir, log_level, log_format,
        ))

    def run() -> int:
        config = load_experiment(args.config) if args.config is not None else ExperimentConfig()
        config = apply_overrides(config, overrides_from(args))
        return execute(args.command, config, defaults, output_directory(config, args.output_dir))

    return _guarded(run)


if __name__ == "__main__":
    sys.exit(main())
