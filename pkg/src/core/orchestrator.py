"""
PrimExp - Verification Orchestrator
Runs the verification suites (moments, counts, distribution) against one
shared checkpointed scan and assembles a deterministic report.
"""

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from src.core.constants import EPS, compute_B1, compute_B2, compute_varM, e_table, lambda_mass, prime_sum_mean
from src.core.counting import count_k_free_moebius, count_k_free_sieve, count_k_full
from src.core.distribution import (
    E_TABLE_SIZE,
    TailBound,
    builtin_distribution,
    ks_statistic,
    mean_closed,
    mean_direct,
    sample,
    second_moment_closed,
    second_moment_direct,
    validate,
)
from src.core.exponents import ExponentSequence, SequenceTag, exponent_summary, factorize
from src.core.settings import DEFAULT_BASELINE_PATH, resolve_project_path
from src.core.verify import (
    ConvergenceRow,
    InsufficientPointsError,
    count_table,
    decade_grid,
    error_exponent_fit,
    geometric_grid,
    identity_checks,
    moment_table,
    rows_frame,
    value_distribution_table,
    variance_table,
)
from src.engines.scan_engine import ScanAccumulator, create_scan_engine

logger = logging.getLogger(__name__)

SCAN_KS = (2, 3, 4, 5, 6)
SUITES = ("moments", "counts", "distribution")
BASELINE_MARGIN = 1.5
BUILTIN_NAMES = ("f1", "f0:10", "f2k:2", "f2k:3", "fA:S", "fA:E", "fA:O", "degenerate")

# absolute limits that apply once the grid reaches the acceptance x
M1_LIMIT = 5e-3
M2_LIMIT = 2e-2
VARM_LIMIT = 2e-2
DIST_M_LIMIT = 2e-3
F1_AGREEMENT = 1e-8
E_MEAN_AGREEMENT = 1e-6
BENFORD_AGREEMENT = 1e-12
DEGENERATE_CONSTANT = 3.0
KS_CRITICAL = 1.63


class CheckStatus(Enum):
    PASSED = "passed"
    FAILED = "failed"
    SKIPPED = "skipped"


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: CheckStatus
    detail: str = ""

    @classmethod
    def of(cls, name: str, passed: bool, detail: str = "") -> "CheckResult":
        return cls(name, CheckStatus.PASSED if passed else CheckStatus.FAILED, detail)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "status": self.status.value,
            "pass": self.status != CheckStatus.FAILED,
            "detail": self.detail,
        }


class VerificationOrchestrator:
    """
    Drives the verification suites. The report carries no timestamps and no
    worker count, so identical inputs give byte-identical reports.
    """

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        self.config = config or self._load_default_config()
        self.logger = logging.getLogger(__name__)

        verify = self.config.get("verify", {})
        self.grid_base = int(verify.get("grid_base", 10 ** 4))
        self.identity_limit = int(verify.get("identity_limit", 10 ** 6))
        self.acceptance_x = int(verify.get("acceptance_x", 10 ** 7))
        self.sample_size = int(verify.get("sample_size", 10 ** 5))
        self.baseline_path = resolve_project_path(verify.get("baseline_path", DEFAULT_BASELINE_PATH))
        self.workers = int(self.config.get("workers", 1))
        self.seed = int(self.config.get("seed", 0))
        self.tables_dir = Path(self.config["tables_dir"]) if self.config.get("tables_dir") else None

        self.baselines = self._load_baselines()
        self.pinning = False
        self.observed: Dict[str, float] = {}
        self.tables: Dict[str, List[ConvergenceRow]] = {}
        self._snapshots: Dict[int, ScanAccumulator] = {}

    def _load_default_config(self) -> Dict[str, Any]:
        return {
            "verify": {
                "grid_base": 10 ** 4,
                "identity_limit": 10 ** 6,
                "acceptance_x": 10 ** 7,
                "sample_size": 10 ** 5,
                "baseline_path": str(DEFAULT_BASELINE_PATH),
            },
            "workers": 1,
            "seed": 0,
        }

    def _load_baselines(self) -> Dict[str, float]:
        if not self.baseline_path.exists():
            self.logger.warning(f"⚠️ No baseline file at {self.baseline_path}; baseline checks fail until --update-baseline pins them")
            return {}
        with open(self.baseline_path, "r", encoding="utf-8") as f:
            return {key: float(value) for key, value in json.load(f).items()}

    # ------------------------------------------------------------------
    # entry point
    # ------------------------------------------------------------------

    def run(self, suite: str, max_x: int, update_baseline: bool = False) -> Dict[str, Any]:
        """Run one suite (or "all") over the grid up to max_x and return the report dict."""
        suites = SUITES if suite == "all" else (suite,)
        unknown = [s for s in suites if s not in SUITES]
        if unknown:
            raise ValueError(f"Unknown suite: {suite}")

        self.pinning = update_baseline
        grid = self.grid(max_x)
        self.logger.info(f"📋 Suite '{suite}' over {len(grid)} grid points up to x = {max_x}")

        checks: List[CheckResult] = []
        if "moments" in suites:
            checks += self.run_moments(grid)
        if "counts" in suites:
            checks += self.run_counts(grid)
        if "distribution" in suites:
            checks += self.run_distribution(grid)

        if self.tables_dir is not None:
            self.write_tables(self.tables_dir)
        if update_baseline:
            self.update_baseline()

        failed = [c.name for c in checks if c.status == CheckStatus.FAILED]
        if failed:
            self.logger.error(f"❌ {len(failed)} check(s) failed: {', '.join(failed)}")
        else:
            self.logger.info(f"✅ All {len(checks)} checks passed or skipped")
        return {
            "suite": suite,
            "max_x": max_x,
            "grid": grid,
            "checks": [c.to_dict() for c in checks],
            "pass": not failed,
        }

    def grid(self, max_x: int) -> List[int]:
        """Geometric checkpoints base * 2^i merged with the decades and max_x itself"""
        points = set(geometric_grid(max_x, self.grid_base)) | set(decade_grid(max_x, self.grid_base))
        points.add(max_x)
        return sorted(points)

    def snapshots(self, grid: Sequence[int]) -> Dict[int, ScanAccumulator]:
        missing = [x for x in grid if x not in self._snapshots]
        if missing:
            self.logger.info(f"🚀 Scanning [1, {max(grid)}] with {self.workers} worker(s)")
            engine = create_scan_engine(self.config)
            _, snaps = engine.run(1, max(grid), SCAN_KS, None, checkpoints=grid)
            self._snapshots.update(snaps)
        return {x: self._snapshots[x] for x in grid}

    # ------------------------------------------------------------------
    # shared check helpers
    # ------------------------------------------------------------------

    def _baseline_check(self, key: str, name: str, rows: Sequence[ConvergenceRow]) -> CheckResult:
        observed = max(abs(r.scaled_residual) for r in rows)
        return self._against_baseline(key, name, observed)

    def _against_baseline(self, key: str, name: str, observed: float) -> CheckResult:
        self.observed[key] = max(observed, self.observed.get(key, 0.0))
        limit = self.baselines.get(key)
        if limit is None:
            if self.pinning:
                return CheckResult(name, CheckStatus.SKIPPED, f"max scaled residual {observed:.6g}; pinned by this run")
            missing = f"max scaled residual {observed:.6g}; no baseline '{key}' in {self.baseline_path.name}"
            return CheckResult(name, CheckStatus.FAILED, missing)
        return CheckResult.of(name, observed <= limit, f"max scaled residual {observed:.6g} vs baseline {limit:.6g}")

    def _fit_check(self, name: str, rows: Sequence[ConvergenceRow], claimed: float) -> CheckResult:
        try:
            fit = error_exponent_fit(rows, claimed)
        except InsufficientPointsError as e:
            return CheckResult(name, CheckStatus.SKIPPED, str(e))
        return CheckResult.of(name, fit.passed, f"slope {fit.fitted_slope:.4f} over {fit.points} points, claimed {claimed}")

    def _acceptance_points(self, grid: Sequence[int]) -> List[int]:
        return [x for x in grid if x >= self.acceptance_x]

    # ------------------------------------------------------------------
    # suites
    # ------------------------------------------------------------------

    def run_moments(self, grid: Sequence[int]) -> List[CheckResult]:
        """Exact identities, moment and variance baselines, absolute limits, M1 / M2 exponent fits"""
        self.logger.info("📊 Moments suite")
        snaps = self.snapshots(grid)
        checks: List[CheckResult] = []

        identity_points = [x for x in grid if x <= self.identity_limit]
        if identity_points:
            x = identity_points[-1]
            for item in identity_checks(x, snaps[x]):
                checks.append(CheckResult.of(f"moments.identity.{item['name']}", item["pass"], item["detail"]))

        for stat, power, key in (("M", 1, "M1"), ("M", 2, "M2"), ("m", 1, "m1"), ("m", 2, "m2")):
            rows = moment_table(stat, power, grid, snaps)
            self.tables[f"moments_{key}"] = rows
            checks.append(self._baseline_check(key, f"moments.{key}.scaled_residual", rows))
        for stat, key in (("M", "varM"), ("m", "varm")):
            rows = variance_table(stat, grid, snaps)
            self.tables[f"variance_{stat}"] = rows
            checks.append(self._baseline_check(key, f"moments.{key}.scaled_residual", rows))

        b1, b2, var = compute_B1(), compute_B2(), compute_varM()
        for x in self._acceptance_points(grid):
            acc = snaps[x]
            mean = acc.sum_max / x
            checks.append(CheckResult.of(f"moments.M1.mean@{x}", abs(mean - b1.value) <= M1_LIMIT,
                                         f"|{mean:.9f} - B1| = {abs(mean - b1.value):.3e}"))
            second = acc.sum_max_sq / x
            checks.append(CheckResult.of(f"moments.M2.mean@{x}", abs(second - b2.value) <= M2_LIMIT,
                                         f"|{second:.9f} - B2| = {abs(second - b2.value):.3e}"))
            empirical_var = second - mean * mean
            checks.append(CheckResult.of(f"moments.varM@{x}", abs(empirical_var - var.value) <= VARM_LIMIT,
                                         f"|{empirical_var:.9f} - varM| = {abs(empirical_var - var.value):.3e}"))

        for key in ("M1", "M2"):
            checks.append(self._fit_check(f"moments.{key}.exponent_fit", self.tables[f"moments_{key}"], 0.5))
        return checks

    def run_counts(self, grid: Sequence[int]) -> List[CheckResult]:
        """Sieve against Moebius, brute-force anchors, k-free / k-full baselines and exponent fits"""
        self.logger.info("📊 Counts suite")
        checks: List[CheckResult] = []

        for x in [x for x in grid if x <= self.identity_limit]:
            for k in (2, 3, 4, 5):
                sieve = count_k_free_sieve(x, k).count
                formula = count_k_free_moebius(x, k).count
                checks.append(CheckResult.of(f"counts.kfree_sieve_vs_moebius.k{k}@{x}", sieve == formula,
                                             f"{sieve} vs {formula}"))

        summaries = [exponent_summary(factorize(n)) for n in range(2, 101)]
        # n = 1 is both 2-full and 2-free
        brute_full = 1 + sum(1 for s in summaries if s.min_exp >= 2)
        brute_free = 1 + sum(1 for s in summaries if s.max_exp <= 1)
        n2, s2 = count_k_full(100, 2).count, count_k_free_sieve(100, 2).count
        checks.append(CheckResult.of("counts.N2@100", n2 == brute_full == 14, f"{n2} vs brute force {brute_full}"))
        checks.append(CheckResult.of("counts.S2@100", s2 == brute_free == 61, f"{s2} vs brute force {brute_free}"))

        free_rows = count_table("k_free", 2, grid)
        self.tables["counts_kfree_2"] = free_rows
        checks.append(self._baseline_check("kfree", "counts.kfree.k2.scaled_residual", free_rows))
        checks.append(self._fit_check("counts.kfree.k2.exponent_fit", free_rows, 1 / 2))
        for k in (2, 3):
            rows = count_table("k_full", k, grid)
            self.tables[f"counts_kfull_{k}"] = rows
            checks.append(self._baseline_check("kfull", f"counts.kfull.k{k}.scaled_residual", rows))
            checks.append(self._fit_check(f"counts.kfull.k{k}.exponent_fit", rows, 1 / (k + 2)))
        return checks

    def run_distribution(self, grid: Sequence[int]) -> List[CheckResult]:
        """Arithmetic-f identities, e_{k,m} sums, Benford, sampling, and the scan's value laws"""
        self.logger.info("📊 Distribution suite")
        checks: List[CheckResult] = []

        f1 = builtin_distribution("f1")
        for label, closed, constant in (
            ("mean", mean_closed(f1), compute_B1()),
            ("second_moment", second_moment_closed(f1), compute_B2()),
        ):
            combined = closed.abs_error_bound + constant.abs_error_bound
            diff = abs(closed.value - constant.value)
            checks.append(CheckResult.of(f"distribution.f1.{label}_vs_constants", diff <= combined and combined <= F1_AGREEMENT,
                                         f"diff {diff:.3e}, combined bound {combined:.3e}"))

        for name in BUILTIN_NAMES:
            dist = builtin_distribution(name)
            report = validate(dist.f)
            bad = ", ".join(c["name"] for c in report.violations)
            checks.append(CheckResult.of(f"distribution.validate.{name}", report.passed, bad or "ok"))
            for label, closed, direct in (
                ("mean", mean_closed(dist), mean_direct(dist)),
                ("second_moment", second_moment_closed(dist), second_moment_direct(dist)),
            ):
                diff = abs(closed.value - direct.value)
                checks.append(CheckResult.of(f"distribution.closed_vs_direct.{name}.{label}", closed.agrees_with(direct),
                                             f"diff {diff:.3e}"))

        checks += self._e_table_checks()
        checks += self._benford_checks()

        draws = sample(f1, self.seed, self.sample_size)
        distance = ks_statistic(draws, f1)
        critical = KS_CRITICAL / math.sqrt(self.sample_size)
        checks.append(CheckResult.of("distribution.f1.sample_ks", distance <= critical,
                                     f"KS distance {distance:.5f} vs {critical:.5f} (seed {self.seed})"))

        checks += self._value_law_checks(grid)
        return checks

    def _e_table_checks(self) -> List[CheckResult]:
        seq = ExponentSequence(SequenceTag.INDICATOR, 2)
        table = e_table(seq, E_TABLE_SIZE)
        lam = lambda_mass(seq)
        tail = TailBound.factorial(lam.value + lam.abs_error_bound).value(E_TABLE_SIZE + 1)
        total = math.fsum(e.value for e in table)
        bound = max(e.abs_error_bound for e in table) + tail + 4 * EPS * len(table)
        checks = [CheckResult.of("distribution.e2.sum_to_one", abs(total - 1.0) <= bound,
                                 f"|sum - 1| = {abs(total - 1.0):.3e}, bound {bound:.3e}")]

        closed = mean_closed(builtin_distribution("f2k:2"))
        primes = prime_sum_mean(2)
        combined = closed.abs_error_bound + primes.abs_error_bound
        diff = abs(closed.value - primes.value)
        checks.append(CheckResult.of("distribution.e2.mean_vs_prime_sum", diff <= combined and combined <= E_MEAN_AGREEMENT,
                                     f"diff {diff:.3e}, combined bound {combined:.3e}"))
        return checks

    def _benford_checks(self) -> List[CheckResult]:
        dist = builtin_distribution("f0:10")
        expected = 1 + math.fsum(1 - math.log(k) / math.log(10) for k in range(2, 10))
        closed, direct = mean_closed(dist), mean_direct(dist, tol=BENFORD_AGREEMENT)
        return [
            CheckResult.of("distribution.benford.closed", abs(closed.value - expected) <= BENFORD_AGREEMENT,
                           f"{closed.value!r} vs {expected!r}"),
            CheckResult.of("distribution.benford.direct", abs(direct.value - expected) <= BENFORD_AGREEMENT,
                           f"{direct.value!r} vs {expected!r}"),
        ]

    def _value_law_checks(self, grid: Sequence[int]) -> List[CheckResult]:
        snaps = self.snapshots(grid)
        checks: List[CheckResult] = []

        scaled = []
        for x in grid:
            rows = value_distribution_table("M", x, 4, snaps[x])
            scaled.append(max(abs(r.residual) for r in rows) * math.sqrt(x))
            if x >= self.acceptance_x:
                worst = max(abs(r.residual) for r in rows)
                checks.append(CheckResult.of(f"distribution.M_law@{x}", worst <= DIST_M_LIMIT,
                                             f"max |P_x(M=k) - limit| = {worst:.3e}"))
        checks.append(self._against_baseline("distM", "distribution.M_law.scaled_residual", max(scaled)))

        for x in [x for x in grid if x >= self.grid_base]:
            p1 = snaps[x].hist_min.get(1, 0) / x
            floor = 1 - DEGENERATE_CONSTANT / math.sqrt(x)
            checks.append(CheckResult.of(f"distribution.m_degenerate@{x}", p1 >= floor, f"P_x(m=1) = {p1:.6f} >= {floor:.6f}"))

        worst = 0.0
        for x in grid:
            for stat in ("omega:2", "omegaA:S", "omegaA:E", "omegaA:O"):
                rows = value_distribution_table(stat, x, 4, snaps[x])
                worst = max(worst, max(abs(r.residual) for r in rows) * math.sqrt(x))
        checks.append(self._against_baseline("omega", "distribution.omega_law.scaled_residual", worst))
        return checks

    # ------------------------------------------------------------------
    # outputs
    # ------------------------------------------------------------------

    def write_tables(self, directory: Path):
        directory.mkdir(parents=True, exist_ok=True)
        for name, rows in sorted(self.tables.items()):
            rows_frame(rows).to_csv(directory / f"{name}.csv", index=False)
        self.logger.info(f"📁 {len(self.tables)} table(s) written to {directory}")

    def update_baseline(self):
        """Re-pin every observed baseline at BASELINE_MARGIN times the value seen"""
        pinned = dict(self.baselines)
        for key, value in self.observed.items():
            pinned[key] = float(f"{value * BASELINE_MARGIN:.3g}") if value > 0 else 1.0
        self.baseline_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.baseline_path, "w", encoding="utf-8") as f:
            json.dump(pinned, f, indent=2, sort_keys=True)
            f.write("\n")
        self.baselines = pinned
        self.logger.info(f"📌 Baselines re-pinned in {self.baseline_path}")


def create_orchestrator(config: Optional[Dict] = None) -> VerificationOrchestrator:
    return VerificationOrchestrator(config)
