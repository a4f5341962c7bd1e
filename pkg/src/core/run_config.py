"""
PrimExp - Run Configuration
Turns parsed command-line arguments into a validated RunConfig. Every
numeric flag is checked here, before any scan or constant is computed.
"""

import argparse
import logging
import re
from dataclasses import asdict, dataclass
from decimal import Decimal, InvalidOperation
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from src.core.distribution import parse_builtin

logger = logging.getLogger(__name__)

SEED_LIMIT = 2 ** 64
MAX_KMAX = 10 ** 4
MAX_SAMPLE = 10 ** 8

_INT_PATTERN = re.compile(r"^[+]?(\d[\d_]*)(\.\d*)?([eE][+]?\d+)?$")


class UsageError(ValueError):
    """Invalid command-line input; reported as one line on stderr."""


class Command(Enum):
    CONSTANTS = "constants"
    SCAN = "scan"
    COUNTS = "counts"
    DIST = "dist"
    VERIFY = "verify"


class OutputFormat(Enum):
    CSV = "csv"
    JSON = "json"


class Suite(Enum):
    ALL = "all"
    MOMENTS = "moments"
    COUNTS = "counts"
    DISTRIBUTION = "distribution"


# counts --kind value -> counting kind, default method, allowed methods
COUNT_KINDS = {
    "kfree": ("k_free", "sieve", ("sieve", "moebius")),
    "kfull": ("k_full", "enumeration", ("enumeration",)),
}


@dataclass
class RunConfig:
    """Everything one CLI invocation needs; identical configs give identical output."""
    command: Command
    output_format: Optional[OutputFormat]
    workers: int
    seed: int
    output: Optional[Path] = None
    verbose: bool = False
    tol: float = 1e-9
    max_x: Optional[int] = None
    stats: Tuple[str, ...] = ("M", "m")
    powers: Tuple[int, ...] = (1, 2)
    checkpoints: str = "geometric"
    checkpoint_file: Optional[Path] = None
    kind: Optional[str] = None
    k: Optional[int] = None
    x: Optional[int] = None
    method: Optional[str] = None
    f: Optional[str] = None
    k_max: int = 10
    moments: bool = False
    sample: Optional[int] = None
    suite: Suite = Suite.ALL
    update_baseline: bool = False

    def format_or(self, default: OutputFormat) -> OutputFormat:
        return self.output_format or default

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, Enum):
                data[key] = value.value
            elif isinstance(value, Path):
                data[key] = str(value)
            elif isinstance(value, tuple):
                data[key] = list(value)
        return data


def parse_int(text: Any, name: str) -> int:
    """Integer flag value; accepts 1000000, 1_000_000 and 1e6 (but not 1.5)."""
    if isinstance(text, int):
        return text
    raw = str(text).strip()
    if not _INT_PATTERN.match(raw):
        raise UsageError(f"--{name}: expected an integer, got {raw!r}")
    try:
        value = Decimal(raw.replace("_", ""))
    except InvalidOperation:
        raise UsageError(f"--{name}: expected an integer, got {raw!r}") from None
    if value != value.to_integral_value():
        raise UsageError(f"--{name}: {raw} is not an integer")
    return int(value)


def parse_float(text: Any, name: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise UsageError(f"--{name}: expected a number, got {text!r}") from None


def parse_list(text: str, name: str, allowed: Tuple[str, ...]) -> Tuple[str, ...]:
    items = tuple(item.strip() for item in str(text).split(",") if item.strip())
    if not items:
        raise UsageError(f"--{name}: empty list")
    unknown = [item for item in items if item not in allowed]
    if unknown:
        raise UsageError(f"--{name}: unknown value(s) {','.join(unknown)}; choose from {','.join(allowed)}")
    return tuple(dict.fromkeys(items))


class RunConfigProcessor:
    """
    Normalizes an argparse namespace into a RunConfig. Defaults come from the
    settings dict; flags override them.
    """

    def __init__(self, settings: Optional[Dict[str, Any]] = None):
        self.settings = settings or {}
        self.logger = logging.getLogger(__name__)

    @property
    def max_x_cap(self) -> int:
        return int(self.settings.get("verify", {}).get("max_x_cap", 10 ** 10))

    def process(self, args: argparse.Namespace) -> RunConfig:
        """Raises UsageError on the first invalid flag."""
        try:
            command = Command(args.command)
        except ValueError:
            raise UsageError(f"unknown command: {args.command}") from None

        workers = args.workers if args.workers is not None else self.settings.get("scan", {}).get("workers", 1)
        seed = args.seed if args.seed is not None else self.settings.get("seed", 0)
        config = RunConfig(
            command=command,
            output_format=OutputFormat(args.format) if args.format else None,
            workers=parse_int(workers, "workers"),
            seed=parse_int(seed, "seed"),
            output=Path(args.output) if args.output else None,
            verbose=bool(args.verbose),
        )

        if command == Command.CONSTANTS:
            self._process_constants(args, config)
        elif command == Command.SCAN:
            self._process_scan(args, config)
        elif command == Command.COUNTS:
            self._process_counts(args, config)
        elif command == Command.DIST:
            self._process_dist(args, config)
        else:
            self._process_verify(args, config)

        self.validate(config)
        self.logger.debug(f"Run configuration: {config.to_dict()}")
        return config

    def _tolerance(self, args: argparse.Namespace) -> float:
        tol = getattr(args, "tol", None)
        return parse_float(tol if tol is not None else self.settings.get("tolerance", 1e-9), "tol")

    def _process_constants(self, args, config: RunConfig):
        config.tol = self._tolerance(args)

    def _process_scan(self, args, config: RunConfig):
        config.max_x = parse_int(args.max_x, "max-x")
        config.stats = parse_list(args.stats, "stats", ("M", "m"))
        config.powers = tuple(int(p) for p in parse_list(args.powers, "powers", ("1", "2")))
        config.checkpoints = args.checkpoints
        config.checkpoint_file = Path(args.checkpoint_file) if args.checkpoint_file else None

    def _process_counts(self, args, config: RunConfig):
        kind, default_method, methods = COUNT_KINDS[args.kind]
        config.kind = kind
        config.k = parse_int(args.k, "k")
        config.x = parse_int(args.x, "x")
        method = args.method or default_method
        if method not in methods:
            raise UsageError(f"--method {method} does not apply to --kind {args.kind}; use {'|'.join(methods)}")
        config.method = method

    def _process_dist(self, args, config: RunConfig):
        try:
            parse_builtin(args.f)
        except ValueError as e:
            raise UsageError(f"--f: {e}") from None
        config.f = args.f
        config.k_max = parse_int(args.kmax, "kmax")
        config.moments = bool(args.moments)
        config.sample = parse_int(args.sample, "sample") if args.sample is not None else None
        config.tol = self._tolerance(args)
        if config.output_format == OutputFormat.CSV and config.moments and config.sample is not None:
            raise UsageError("--format csv takes either --moments or --sample, not both")

    def _process_verify(self, args, config: RunConfig):
        config.suite = Suite(args.suite)
        config.max_x = parse_int(args.max_x, "max-x")
        config.update_baseline = bool(args.update_baseline)

    def validate(self, config: RunConfig):
        """Range checks shared by every command."""
        if config.workers < 1:
            raise UsageError(f"--workers must be >= 1, got {config.workers}")
        if not 0 <= config.seed < SEED_LIMIT:
            raise UsageError(f"--seed must be a 64-bit unsigned integer, got {config.seed}")
        if not 0 < config.tol < 1:
            raise UsageError(f"--tol must be in (0, 1), got {config.tol}")
        if config.max_x is not None and not 1 <= config.max_x <= self.max_x_cap:
            raise UsageError(f"--max-x must be in [1, {self.max_x_cap}], got {config.max_x}")
        if config.command == Command.COUNTS:
            if config.k < 2:
                raise UsageError(f"--k must be >= 2, got {config.k}")
            if not 1 <= config.x <= self.max_x_cap:
                raise UsageError(f"--x must be in [1, {self.max_x_cap}], got {config.x}")
        if config.command == Command.DIST:
            if not 1 <= config.k_max <= MAX_KMAX:
                raise UsageError(f"--kmax must be in [1, {MAX_KMAX}], got {config.k_max}")
            if config.sample is not None and not 1 <= config.sample <= MAX_SAMPLE:
                raise UsageError(f"--sample must be in [1, {MAX_SAMPLE}], got {config.sample}")


def create_processor(settings: Optional[Dict[str, Any]] = None) -> RunConfigProcessor:
    """Factory function to create the run configuration processor"""
    return RunConfigProcessor(settings)
