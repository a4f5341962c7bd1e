"""
PrimExp - Arithmetic-f Distributions
X_f takes the value k with probability f(k+1) - f(k) for a non-decreasing f
with f(0) = 0 and f(n) -> 1. Every built-in carries a certified majorant of
its tail 1 - f(n), which is what makes its moments computable to a bound.
"""

import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.constants import (
    EPS,
    ConstantEstimate,
    ToleranceUnreachableError,
    compute_D1,
    compute_D2,
    e_table,
    lambda_mass,
    one_minus_inverse_zeta,
    smallest_truncation,
)
from src.core.exponents import ExponentSequence, SequenceTag

logger = logging.getLogger(__name__)

# e_{A,m} materialized for m <= E_TABLE_SIZE; beyond it the factorial tail rules
E_TABLE_SIZE = 24
MAX_DIRECT_TERMS = 2 ** 20

__all__ = [
    "ArithmeticF",
    "ArithmeticFDistribution",
    "TailBound",
    "TailKind",
    "ToleranceUnreachableError",
    "UnknownBuiltinError",
    "ValidationReport",
    "builtin",
    "builtin_distribution",
    "cdf",
    "ks_statistic",
    "mean_closed",
    "mean_direct",
    "parse_builtin",
    "pmf",
    "pmf_table",
    "sample",
    "second_moment_closed",
    "second_moment_direct",
    "validate",
    "variance",
]


class UnknownBuiltinError(ValueError):
    """Name does not match any built-in arithmetic function."""


class TailKind(Enum):
    FINITE = "finite"
    GEOMETRIC = "geometric"
    FACTORIAL = "factorial"
    POWER = "power"


@dataclass(frozen=True)
class TailBound:
    """
    Majorant t(n) >= 1 - f(n) with closed-form bounds on sum_{k>=n} t(k) and
    sum_{k>=n} (2k - 1) t(k).

        finite      t(n) = 1 for n < support, 0 after
        geometric   t(n) = scale * ratio^n
        factorial   t(n) = lam^n / n!   (P(X >= n) for a Poisson-binomial X of mean lam)
        power       t(n) = scale * n^-(2 + eps)
    """
    kind: TailKind
    support: Optional[int] = None
    scale: float = 1.0
    ratio: float = 0.0
    lam: float = 0.0
    eps: float = 1.0

    @classmethod
    def finite(cls, support: int) -> "TailBound":
        return cls(TailKind.FINITE, support=support)

    @classmethod
    def geometric(cls, scale: float, ratio: float) -> "TailBound":
        if not 0 < ratio < 1:
            raise ValueError(f"Geometric ratio must be in (0, 1), got {ratio}")
        return cls(TailKind.GEOMETRIC, scale=scale, ratio=ratio)

    @classmethod
    def factorial(cls, lam: float) -> "TailBound":
        if lam < 0:
            raise ValueError(f"lam must be >= 0, got {lam}")
        return cls(TailKind.FACTORIAL, lam=lam)

    @classmethod
    def power(cls, scale: float, eps: float) -> "TailBound":
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        return cls(TailKind.POWER, scale=scale, eps=eps)

    def value(self, n: int) -> float:
        if n <= 0:
            return 1.0
        if self.kind == TailKind.FINITE:
            return 0.0 if n >= self.support else 1.0
        if self.kind == TailKind.GEOMETRIC:
            return min(1.0, self.scale * self.ratio ** n)
        if self.kind == TailKind.FACTORIAL:
            if self.lam == 0:
                return 0.0
            return min(1.0, math.exp(n * math.log(self.lam) - math.lgamma(n + 1)))
        return min(1.0, self.scale * n ** -(2 + self.eps))

    def sum_from(self, n: int) -> float:
        n = max(n, 1)
        if self.kind == TailKind.FINITE:
            return float(max(0, self.support - n))
        if self.kind == TailKind.GEOMETRIC:
            return self.scale * self.ratio ** n / (1 - self.ratio)
        if self.kind == TailKind.FACTORIAL:
            rho = self.lam / (n + 1)
            return self.value(n) / (1 - rho) if rho < 1 else math.inf
        a = 2 + self.eps
        return self.scale * (n ** -a + n ** (1 - a) / (a - 1))

    def weighted_sum_from(self, n: int) -> float:
        n = max(n, 1)
        if self.kind == TailKind.FINITE:
            return float(max(0, (self.support - 1) ** 2 - (n - 1) ** 2))
        if self.kind == TailKind.GEOMETRIC:
            r = self.ratio
            first = r ** n * (n * (1 - r) + r) / (1 - r) ** 2
            return self.scale * (2 * first - r ** n / (1 - r))
        if self.kind == TailKind.FACTORIAL:
            # consecutive terms shrink by (2k+1)/(2k-1) * lam/(k+1) <= 3 lam/(n+1)
            rho = 3 * self.lam / (n + 1)
            return (2 * n - 1) * self.value(n) / (1 - rho) if rho < 1 else math.inf
        a = 2 + self.eps
        return 2 * self.scale * (n ** (1 - a) + n ** (2 - a) / (a - 2))

    def property_b(self) -> Dict[str, float]:
        """Constants (C, eps) with t(n) <= C n^-(2 + eps) for n >= 1"""
        if self.kind == TailKind.POWER:
            return {"C": self.scale, "eps": self.eps}
        if self.kind == TailKind.FINITE:
            return {"C": float(self.support ** 3), "eps": 1.0}
        # geometric and factorial majorants: the max of t(n) n^3 is attained early
        c = max(self.value(n) * n ** 3 for n in range(1, 400))
        return {"C": c, "eps": 1.0}

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind.value}
        if self.kind == TailKind.FINITE:
            data["support"] = self.support
        elif self.kind == TailKind.GEOMETRIC:
            data.update(scale=self.scale, ratio=self.ratio)
        elif self.kind == TailKind.FACTORIAL:
            data["lam"] = self.lam
        data["property_b"] = self.property_b()
        return data


class ArithmeticF:
    """
    Non-decreasing f on the non-negative integers with f(0) = 0 and limit 1.

    complement(n) = 1 - f(n) is evaluated directly where the instance knows
    how, so tails do not suffer cancellation. eval_error bounds the absolute
    error of every complement evaluation. Without a tail bound the instance
    is non-certified and only heuristic validation applies.
    """

    def __init__(
        self,
        name: str,
        func: Callable[[int], float],
        tail: Optional[TailBound] = None,
        complement: Optional[Callable[[int], float]] = None,
        eval_error: float = 0.0,
        decreasing_increments: bool = False,
    ):
        self.name = name
        self._func = func
        self._complement = complement
        self.tail = tail
        self.eval_error = eval_error
        self.certified = tail is not None
        self.decreasing_increments = decreasing_increments

    def __call__(self, n: int) -> float:
        if n < 0:
            raise ValueError(f"f is defined on n >= 0, got {n}")
        if self._complement is not None:
            return 1.0 - self._complement(n)
        return float(self._func(n))

    def complement(self, n: int) -> float:
        if n < 0:
            raise ValueError(f"f is defined on n >= 0, got {n}")
        if self._complement is not None:
            return float(self._complement(n))
        return 1.0 - float(self._func(n))

    def __repr__(self) -> str:
        return f"ArithmeticF({self.name!r}, certified={self.certified})"


@dataclass(frozen=True)
class ArithmeticFDistribution:
    f: ArithmeticF

    @property
    def name(self) -> str:
        return self.f.name


# --------------------------------------------------------------------------
# pmf / cdf / moments
# --------------------------------------------------------------------------

def pmf(dist: ArithmeticFDistribution, k: int) -> float:
    """f(k+1) - f(k), taken as a difference of complements"""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    return dist.f.complement(k) - dist.f.complement(k + 1)


def cdf(dist: ArithmeticFDistribution, k: int) -> float:
    """P(X <= k) = f(k+1)"""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    return dist.f(k + 1)


def _require_certified(dist: ArithmeticFDistribution):
    if not dist.f.certified:
        raise ToleranceUnreachableError(f"{dist.name} has no certified tail bound")


def mean_closed(dist: ArithmeticFDistribution, tol: float = 1e-9) -> ConstantEstimate:
    """1 - f(1) + D1"""
    _require_certified(dist)
    head = ConstantEstimate(dist.f.complement(1), dist.f.eval_error, "closed_form")
    result = head + compute_D1(dist.f, tol)
    return ConstantEstimate(result.value, result.abs_error_bound, "closed_form")


def second_moment_closed(dist: ArithmeticFDistribution, tol: float = 1e-9) -> ConstantEstimate:
    """1 - f(1) + D2"""
    _require_certified(dist)
    head = ConstantEstimate(dist.f.complement(1), dist.f.eval_error, "closed_form")
    result = head + compute_D2(dist.f, tol)
    return ConstantEstimate(result.value, result.abs_error_bound, "closed_form")


def variance(dist: ArithmeticFDistribution, tol: float = 1e-9) -> ConstantEstimate:
    mean = mean_closed(dist, tol)
    result = second_moment_closed(dist, tol) - mean * mean
    # a variance is never negative; clamp rounding noise on point masses
    if result.value < 0 and -result.value <= result.abs_error_bound:
        return ConstantEstimate(0.0, result.abs_error_bound, "closed_form")
    return ConstantEstimate(result.value, result.abs_error_bound, "closed_form")


def _direct_tail(dist: ArithmeticFDistribution, power: int) -> Callable[[int], float]:
    """
    Bound on sum_{k > K} k^r p_k. With c_k = 1 - f(k), summation by parts gives
    (K+1) c_{K+1} + sum_{n >= K+2} c_n for r = 1 and
    (K+1)^2 c_{K+1} + sum_{n >= K+2} (2n - 1) c_n for r = 2.
    """
    tail = dist.f.tail
    if power == 1:
        return lambda k: (k + 1) * tail.value(k + 1) + tail.sum_from(k + 2)
    return lambda k: (k + 1) ** 2 * tail.value(k + 1) + tail.weighted_sum_from(k + 2)


def _direct_moment(dist: ArithmeticFDistribution, power: int, K: Optional[int], tol: float) -> ConstantEstimate:
    _require_certified(dist)
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    tail = dist.f.tail
    bound = _direct_tail(dist, power)
    if K is None:
        if tail.support is not None:
            K = max(tail.support - 1, 1)
        else:
            K = smallest_truncation(bound, tol / 2, MAX_DIRECT_TERMS, dist.name)
    truncation = 0.0 if tail.support is not None and K >= tail.support - 1 else bound(K)
    if truncation > tol:
        raise ToleranceUnreachableError(f"{dist.name}: truncation at K = {K} leaves {truncation:.3e} > tol {tol:.1e}")

    terms = [k ** power * pmf(dist, k) for k in range(1, K + 1)]
    value = math.fsum(terms)
    err = (
        truncation
        + 2 * dist.f.eval_error * sum(k ** power for k in range(1, K + 1))
        + 4 * EPS * math.fsum(abs(t) for t in terms)
    )
    return ConstantEstimate(value, err, "direct")


def mean_direct(dist: ArithmeticFDistribution, K: Optional[int] = None, tol: float = 1e-9) -> ConstantEstimate:
    """sum_{k <= K} k p_k with a certified truncation error"""
    return _direct_moment(dist, 1, K, tol)


def second_moment_direct(dist: ArithmeticFDistribution, K: Optional[int] = None, tol: float = 1e-9) -> ConstantEstimate:
    """sum_{k <= K} k^2 p_k with a certified truncation error"""
    return _direct_moment(dist, 2, K, tol)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------

def _cdf_table(dist: ArithmeticFDistribution) -> np.ndarray:
    """cdf(0..K) where K is the support end or where the tail drops below EPS/4"""
    tail = dist.f.tail
    if tail is not None and tail.support is not None:
        k_max = max(tail.support - 1, 0)
    elif tail is not None:
        k_max = smallest_truncation(lambda k: tail.value(k + 1), EPS / 4, MAX_DIRECT_TERMS, dist.name)
    else:
        k_max = 0
        while dist.f.complement(k_max + 1) > EPS / 4 and k_max < MAX_DIRECT_TERMS:
            k_max += 1
    return np.array([cdf(dist, k) for k in range(k_max + 1)])


def sample(dist: ArithmeticFDistribution, seed: int, count: int) -> List[int]:
    """
    Inverse-CDF sampling with numpy's PCG64 generator: draw u in [0, 1) and
    return the smallest k with f(k+1) > u.
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    rng = np.random.default_rng(seed)
    table = _cdf_table(dist)
    u = rng.random(count)
    idx = np.searchsorted(table, u, side="right")
    return np.minimum(idx, len(table) - 1).tolist()


def ks_statistic(samples: Sequence[int], dist: ArithmeticFDistribution) -> float:
    """sup_k |F_emp(k) - F(k)| over the sample's range"""
    values = np.asarray(samples, dtype=np.int64)
    if values.size == 0:
        raise ValueError("Need at least one sample")
    counts = np.bincount(values)
    empirical = np.cumsum(counts) / values.size
    theoretical = np.array([cdf(dist, k) for k in range(len(counts))])
    return float(np.max(np.abs(empirical - theoretical)))


def pmf_table(dist: ArithmeticFDistribution, k_max: int) -> pd.DataFrame:
    """Columns k, pmf, cdf for k = 0..k_max"""
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max}")
    ks = list(range(k_max + 1))
    return pd.DataFrame({
        "k": ks,
        "pmf": [pmf(dist, k) for k in ks],
        "cdf": [cdf(dist, k) for k in ks],
    })


# --------------------------------------------------------------------------
# built-ins
# --------------------------------------------------------------------------

def benford_f(n0: int) -> ArithmeticF:
    """f0(n) = log n / log N0 for 1 <= n < N0, 1 from N0 on"""
    if n0 < 2:
        raise ValueError(f"N0 must be >= 2, got {n0}")
    log_n0 = math.log(n0)

    def complement(n: int) -> float:
        if n == 0:
            return 1.0
        if n >= n0:
            return 0.0
        return 1.0 - math.log(n) / log_n0

    return ArithmeticF(f"f0:{n0}", None, TailBound.finite(n0), complement, eval_error=2 * EPS)


def zeta_f() -> ArithmeticF:
    """f1(0) = f1(1) = 0, f1(n) = 1/zeta(n); 1 - f1(n) < 2^(1-n)"""

    def complement(n: int) -> float:
        if n <= 1:
            return 1.0
        return one_minus_inverse_zeta(n).value

    eval_error = max(one_minus_inverse_zeta(n).abs_error_bound for n in range(2, 130)) + EPS
    return ArithmeticF(
        "f1",
        None,
        TailBound.geometric(2.0, 0.5),
        complement,
        eval_error=eval_error,
        decreasing_increments=True,
    )


def omega_law_f(seq: ExponentSequence, name: str) -> ArithmeticF:
    """
    f_A(n) = sum_{m<n} e_{A,m}. Since omega_A's limit law is Poisson-binomial
    with mean lam, 1 - f_A(n) = P(X >= n) <= lam^n / n!.
    """
    table = e_table(seq, E_TABLE_SIZE)
    values = [e.value for e in table]
    err = max(e.abs_error_bound for e in table)
    lam = lambda_mass(seq)
    tail = TailBound.factorial(lam.value + lam.abs_error_bound)

    # suffix sums give 1 - f(n) without cancellation
    suffix = [0.0] * (len(values) + 1)
    for m in range(len(values) - 1, -1, -1):
        suffix[m] = suffix[m + 1] + values[m]

    def complement(n: int) -> float:
        if n == 0:
            return 1.0
        if n > len(values):
            return 0.0
        return min(1.0, max(0.0, suffix[n]))

    # the e_table bound holds for the whole vector in l1, so it also bounds suffix sums
    eval_error = err + tail.value(len(values) + 1)
    return ArithmeticF(name, None, tail, complement, eval_error=eval_error)


def degenerate_f() -> ArithmeticF:
    """f(0) = f(1) = 0 and f(n) = 1 for n >= 2: point mass at 1"""
    return ArithmeticF(
        "degenerate",
        None,
        TailBound.finite(2),
        lambda n: 1.0 if n <= 1 else 0.0,
    )


_BUILTIN_PATTERN = re.compile(r"^(?P<head>[A-Za-z0-9]+)(?:[:(](?P<arg>[^)]*)\)?)?$")


def parse_builtin(name: str) -> Tuple[str, Optional[int]]:
    """
    Check a built-in name without building it. Returns (head, argument):
    the integer N or K for f0 and f2k, None otherwise (fA keeps its letter
    in the head, e.g. "fA:S").
    """
    match = _BUILTIN_PATTERN.match(name.strip())
    if not match:
        raise UnknownBuiltinError(f"Unknown arithmetic function: {name}")
    head, arg = match.group("head"), match.group("arg")

    if head in ("f1", "degenerate") and arg is None:
        return head, None
    if head in ("f0", "f2k") and arg:
        try:
            value = int(arg)
        except ValueError:
            raise UnknownBuiltinError(f"{head} needs an integer argument, got {arg!r}") from None
        if head == "f0" and value < 2:
            raise ValueError(f"N0 must be >= 2, got {value}")
        if head == "f2k" and value < 2:
            raise ValueError(f"f2k needs k >= 2, got {value}")
        return head, value
    if head == "fA" and arg in ("S", "E", "O"):
        return f"fA:{arg}", None
    raise UnknownBuiltinError(f"Unknown arithmetic function: {name}")


def builtin(name: str) -> ArithmeticF:
    """f0:N, f1, f2k:K, fA:S|E|O, degenerate (f0(N) style also accepted)"""
    head, value = parse_builtin(name)
    if head == "f1":
        return zeta_f()
    if head == "degenerate":
        return degenerate_f()
    if head == "f0":
        return benford_f(value)
    if head == "f2k":
        return omega_law_f(ExponentSequence(SequenceTag.INDICATOR, value), f"f2k:{value}")
    label = head.partition(":")[2]
    return omega_law_f(ExponentSequence(SequenceTag(label)), head)


def builtin_distribution(name: str) -> ArithmeticFDistribution:
    return ArithmeticFDistribution(builtin(name))


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

@dataclass
class ValidationReport:
    name: str
    certified: bool
    checks: List[Dict[str, Any]] = field(default_factory=list)

    def add(self, name: str, passed: bool, detail: str = ""):
        self.checks.append({"name": name, "pass": bool(passed), "detail": detail})

    @property
    def violations(self) -> List[Dict[str, Any]]:
        return [c for c in self.checks if not c["pass"]]

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "certified": self.certified, "checks": self.checks, "pass": self.passed}


def validate(f: ArithmeticF, n_max: int = 64) -> ValidationReport:
    """
    Check f(0) = 0, range, monotonicity up to n_max and the tail bound; for
    functions flagged with decreasing increments, also that f(n+1) - f(n)
    strictly decreases from n = 2. Never raises on a bad f.
    """
    if n_max < 2:
        raise ValueError(f"n_max must be >= 2, got {n_max}")
    report = ValidationReport(f.name, f.certified)
    values = [f(n) for n in range(n_max + 1)]
    complements = [f.complement(n) for n in range(n_max + 2)]

    report.add("f0_zero", values[0] == 0.0, f"f(0) = {values[0]}")
    out_of_range = [n for n, v in enumerate(values) if not 0.0 <= v <= 1.0]
    report.add("range", not out_of_range, f"outside [0, 1] at n = {out_of_range[:5]}" if out_of_range else "")
    drops = [n for n in range(n_max) if values[n + 1] < values[n]]
    report.add("monotone", not drops, f"f(n+1) < f(n) at n = {drops[:5]}" if drops else "")

    if f.certified:
        slack = f.eval_error + EPS
        over = [n for n in range(n_max + 1) if complements[n] > f.tail.value(n) + slack]
        report.add("tail_bound", not over, f"1 - f(n) above bound at n = {over[:5]}" if over else "")
        report.add(
            "tail_decays",
            f.tail.value(n_max) < f.tail.value(1) or f.tail.value(n_max) == 0.0,
            f"t({n_max}) = {f.tail.value(n_max):.3e}",
        )
    else:
        report.add("tail_bound", True, "non-certified: heuristic check only")
        report.add("tail_decays", complements[n_max] < complements[1] or complements[n_max] == 0.0,
                   f"1 - f({n_max}) = {complements[n_max]:.3e}")

    if f.decreasing_increments:
        steps = [complements[n] - complements[n + 1] for n in range(2, n_max + 1)]
        rises = [n + 2 for n in range(len(steps) - 1) if not steps[n + 1] < steps[n]]
        report.add("decreasing_increments", not rises, f"increment not decreasing at n = {rises[:5]}" if rises else "")

    if report.violations:
        logger.info(f"Validation of {f.name}: {len(report.violations)} violation(s)")
    return report
