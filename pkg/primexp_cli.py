#!/usr/bin/env python3
"""
PrimExp - Prime Exponent Statistics
Main entry point - constants, scans, counts, distributions and the verification suite
"""

import argparse
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

# Force UTF-8 on Windows consoles so the log emojis survive
if sys.platform == "win32":
    try:
        sys.stdout.reconfigure(encoding='utf-8')  # type: ignore
        sys.stderr.reconfigure(encoding='utf-8')  # type: ignore
    except AttributeError:
        import codecs
        sys.stdout = codecs.getwriter("utf-8")(sys.stdout.detach())  # type: ignore
        sys.stderr = codecs.getwriter("utf-8")(sys.stderr.detach())  # type: ignore

# Repo root on the path so `src.*` resolves when run as a script
sys.path.insert(0, str(Path(__file__).parent))

import pandas as pd  # noqa: E402

from src.core.constants import constants_report  # noqa: E402
from src.core.counting import count_k_free, count_k_full  # noqa: E402
from src.core.distribution import (  # noqa: E402
    builtin_distribution,
    ks_statistic,
    mean_closed,
    mean_direct,
    pmf_table,
    sample,
    second_moment_closed,
    second_moment_direct,
    validate,
    variance,
)
from src.core.orchestrator import create_orchestrator  # noqa: E402
from src.core.run_config import Command, OutputFormat, RunConfig, UsageError, create_processor  # noqa: E402
from src.core.settings import load_settings  # noqa: E402
from src.core.verify import ROW_COLUMNS, decade_grid, geometric_grid, moment_table  # noqa: E402
from src.engines.scan_engine import create_scan_engine  # noqa: E402

PROG = "primexp"


class CliArgumentParser(argparse.ArgumentParser):
    """Usage errors become UsageError so main() can report them on one line."""

    def error(self, message: str):
        raise UsageError(message)


def setup_logging(verbose: bool = False, settings: Optional[Dict[str, Any]] = None) -> logging.Logger:
    """Setup logging configuration"""
    log_settings = (settings or {}).get("logging", {})
    level = logging.DEBUG if verbose else getattr(logging, str(log_settings.get("level", "INFO")).upper(), logging.INFO)

    log_file = Path(log_settings.get("file", "output/logs/primexp.log"))
    log_file.parent.mkdir(parents=True, exist_ok=True)

    # stderr only, so stdout stays clean for CSV / JSON
    logging.basicConfig(
        level=level,
        format=log_settings.get("format", '%(asctime)s - %(name)s - %(levelname)s - %(message)s'),
        handlers=[
            logging.FileHandler(log_file, encoding='utf-8'),
            logging.StreamHandler(sys.stderr)
        ]
    )

    return logging.getLogger("primexp_cli")


def build_parser() -> CliArgumentParser:
    common = CliArgumentParser(add_help=False)
    common.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging and progress bars")
    common.add_argument("--format", choices=["csv", "json"], help="Output format (default depends on the command)")
    common.add_argument("--output", "-o", help="Directory that also receives the output file(s)")
    common.add_argument("--workers", help="Scan worker processes (default from settings)")
    common.add_argument("--seed", help="64-bit seed for every random draw (default from settings)")
    common.add_argument("--settings", help="Settings file (default: config/settings.json in the repo)")

    parser = CliArgumentParser(
        prog=PROG,
        description="PrimExp - maximum / minimum prime exponent statistics",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:

  python primexp_cli.py constants --tol 1e-9
  python primexp_cli.py scan --max-x 1e6 --stats M,m --powers 1,2
  python primexp_cli.py counts --kind kfull --k 2 --x 100
  python primexp_cli.py dist --f f1 --kmax 5
  python primexp_cli.py verify --suite all --max-x 1e6
        """
    )
    commands = parser.add_subparsers(dest="command", required=True, metavar="command")

    constants = commands.add_parser("constants", parents=[common], help="Certified constants as JSON")
    constants.add_argument("--tol", help="Absolute tolerance for B1, B2, varM")

    scan = commands.add_parser("scan", parents=[common], help="Moment convergence tables from a segmented scan")
    scan.add_argument("--max-x", required=True, help="Scan [1, max-x]")
    scan.add_argument("--stats", default="M,m", help="Comma list from M,m")
    scan.add_argument("--powers", default="1,2", help="Comma list from 1,2")
    scan.add_argument("--checkpoints", choices=["geometric", "decade"], default="geometric", help="Checkpoint grid")
    scan.add_argument("--checkpoint-file", help="JSON state file for resumable scans")

    counts = commands.add_parser("counts", parents=[common], help="Exact k-free / k-full counts")
    counts.add_argument("--kind", choices=["kfree", "kfull"], required=True)
    counts.add_argument("--k", required=True)
    counts.add_argument("--x", required=True)
    counts.add_argument("--method", choices=["sieve", "moebius", "enumeration"])

    dist = commands.add_parser("dist", parents=[common], help="Arithmetic-f distributions")
    dist.add_argument("--f", required=True, help="f1 | f0:N | f2k:K | fA:S|E|O | degenerate")
    dist.add_argument("--kmax", default="10", help="Last k of the pmf table")
    dist.add_argument("--moments", action="store_true", help="Closed-form and direct moments")
    dist.add_argument("--sample", help="Draw N values by inverse-CDF sampling")
    dist.add_argument("--tol", help="Tolerance for the moments")

    verify = commands.add_parser("verify", parents=[common], help="Run the verification suites")
    verify.add_argument("--suite", choices=["all", "moments", "counts", "distribution"], default="all")
    verify.add_argument("--max-x", required=True, help="Largest x of the checkpoint grid")
    verify.add_argument("--update-baseline", action="store_true", help="Re-pin baselines from this run")
    return parser


# ----------------------------------------------------------------------
# rendering
# ----------------------------------------------------------------------

def to_csv(frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, sep=",", lineterminator="\n")
    return buffer.getvalue()


def to_json(data: Any) -> str:
    return json.dumps(data, indent=2) + "\n"


def emit(text: str, config: RunConfig, suffix: str):
    sys.stdout.write(text)
    sys.stdout.flush()
    if config.output is not None:
        config.output.mkdir(parents=True, exist_ok=True)
        path = config.output / f"{config.command.value}.{suffix}"
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        logging.getLogger("primexp_cli").info(f"📁 Output saved to: {path}")


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def run_constants(config: RunConfig, settings: Dict[str, Any]) -> int:
    report = constants_report(config.tol)
    fmt = config.format_or(OutputFormat.JSON)
    if fmt == OutputFormat.CSV:
        frame = pd.DataFrame(
            [{"name": name, **c} for name, c in report.items()],
            columns=["name", "value", "error_bound", "method"],
        )
        emit(to_csv(frame), config, "csv")
    else:
        emit(to_json(report), config, "json")
    return 0


def scan_grid(config: RunConfig, settings: Dict[str, Any]) -> List[int]:
    base = int(settings.get("verify", {}).get("grid_base", 10 ** 4))
    if config.checkpoints == "decade":
        points = decade_grid(config.max_x, base)
    else:
        points = geometric_grid(config.max_x, base)
    return sorted(set(points) | {config.max_x})


def run_scan(config: RunConfig, settings: Dict[str, Any]) -> int:
    grid = scan_grid(config, settings)
    engine = create_scan_engine({**settings, "workers": config.workers, "verbose": config.verbose})
    _, snapshots = engine.run(1, config.max_x, (), None, checkpoints=grid, checkpoint_path=config.checkpoint_file)
    tables = {}
    for stat in config.stats:
        for power in config.powers:
            tables[f"{stat}{power}"] = moment_table(stat, power, grid, snapshots)

    if config.format_or(OutputFormat.CSV) == OutputFormat.JSON:
        emit(to_json({
            "max_x": config.max_x,
            "grid": grid,
            "tables": {key: [r.to_dict() for r in rows] for key, rows in tables.items()},
        }), config, "json")
    else:
        records = [
            {"stat": key[0], "power": int(key[1:]), **r.to_dict()}
            for key, rows in tables.items() for r in rows
        ]
        emit(to_csv(pd.DataFrame(records, columns=["stat", "power"] + ROW_COLUMNS)), config, "csv")
    return 0


def run_counts(config: RunConfig, settings: Dict[str, Any]) -> int:
    if config.kind == "k_full":
        report = count_k_full(config.x, config.k)
    else:
        report = count_k_free(config.x, config.k, config.method)

    if config.output_format == OutputFormat.JSON:
        emit(to_json(report.to_dict()), config, "json")
    elif config.output_format == OutputFormat.CSV:
        emit(to_csv(pd.DataFrame([report.to_dict()])), config, "csv")
    else:
        emit(f"{report.count}\n", config, "txt")
    return 0


def _moments(dist, tol: float) -> Dict[str, Dict[str, object]]:
    return {
        "mean_closed": mean_closed(dist, tol).to_dict(),
        "mean_direct": mean_direct(dist, tol=tol).to_dict(),
        "second_moment_closed": second_moment_closed(dist, tol).to_dict(),
        "second_moment_direct": second_moment_direct(dist, tol=tol).to_dict(),
        "variance": variance(dist, tol).to_dict(),
    }


def run_dist(config: RunConfig, settings: Dict[str, Any]) -> int:
    dist = builtin_distribution(config.f)
    report = validate(dist.f)
    if not report.passed:
        logging.getLogger("primexp_cli").warning(f"⚠️ {dist.name} failed validation: {report.violations}")

    moments = _moments(dist, config.tol) if config.moments else None
    draws = sample(dist, config.seed, config.sample) if config.sample is not None else None

    if config.format_or(OutputFormat.CSV) == OutputFormat.JSON:
        data: Dict[str, Any] = {
            "f": dist.name,
            "pmf": pmf_table(dist, config.k_max).to_dict(orient="records"),
            "validation": report.to_dict(),
        }
        if moments is not None:
            data["moments"] = moments
        if draws is not None:
            data["sample"] = {"seed": config.seed, "values": draws, "ks_statistic": ks_statistic(draws, dist)}
        emit(to_json(data), config, "json")
    elif moments is not None:
        frame = pd.DataFrame(
            [{"quantity": name, **value} for name, value in moments.items()],
            columns=["quantity", "value", "error_bound", "method"],
        )
        emit(to_csv(frame), config, "csv")
    elif draws is not None:
        emit(to_csv(pd.DataFrame({"index": range(len(draws)), "value": draws})), config, "csv")
    else:
        emit(to_csv(pmf_table(dist, config.k_max)), config, "csv")
    return 0 if report.passed else 1


def run_verify(config: RunConfig, settings: Dict[str, Any]) -> int:
    orchestrator = create_orchestrator({
        **settings,
        "workers": config.workers,
        "seed": config.seed,
        "verbose": config.verbose,
        "tables_dir": str(config.output / "tables") if config.output else None,
    })
    report = orchestrator.run(config.suite.value, config.max_x, update_baseline=config.update_baseline)

    if config.format_or(OutputFormat.JSON) == OutputFormat.CSV:
        frame = pd.DataFrame(report["checks"], columns=["name", "status", "pass", "detail"])
        emit(to_csv(frame), config, "csv")
    else:
        emit(to_json(report), config, "json")
    return 0 if report["pass"] else 1


COMMANDS = {
    Command.CONSTANTS: run_constants,
    Command.SCAN: run_scan,
    Command.COUNTS: run_counts,
    Command.DIST: run_dist,
    Command.VERIFY: run_verify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point"""
    try:
        args = build_parser().parse_args(argv)
        settings = load_settings(args.settings)
        config = create_processor(settings).process(args)
    except (UsageError, ValueError) as e:
        sys.stderr.write(f"{PROG}: error: {e}\n")
        return 2

    logger = setup_logging(config.verbose, settings)

    try:
        logger.info("=" * 60)
        logger.info(f"PrimExp - {config.command.value}")
        logger.info("=" * 60)

        code = COMMANDS[config.command](config, settings)

        if code == 0:
            logger.info(f"✅ {config.command.value} completed successfully")
        else:
            logger.error(f"❌ {config.command.value} finished with failed checks")
        return code

    except KeyboardInterrupt:
        logger.warning("⚠️  Run cancelled by user")
        return 130

    except Exception as e:
        logger.exception(f"❌ Fatal error: {e}")
        sys.stdout.write(json.dumps({"status": "failed", "error": str(e)}) + "\n")
        sys.stdout.flush()
        return 1


if __name__ == "__main__":
    sys.exit(main())
