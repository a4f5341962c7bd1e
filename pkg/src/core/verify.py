"""
PrimExp - Verification Tables
Confronts each asymptotic main term with exact scan and count data:
convergence rows, value-distribution rows, exact proof identities and
least-squares fits of the residual exponent.
"""

import logging
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.core.constants import ConstantEstimate, compute_B1, compute_B2, compute_varM, e_table, gamma0, gamma1, zeta
from src.core.counting import count_k_free_moebius, count_k_full, k_free_count, k_full_count
from src.core.distribution import builtin_distribution, pmf
from src.core.exponents import ExponentSequence, SequenceTag
from src.engines.scan_engine import ScanAccumulator, scan_checkpoints

logger = logging.getLogger(__name__)

FIT_SLACK = 0.15
MIN_FIT_POINTS = 4
MIN_FIT_DECADES = 3.0
NOISE_FACTOR = 10.0
ROW_COLUMNS = ["x", "empirical", "predicted", "residual", "scaled_residual"]

Snapshots = Dict[int, ScanAccumulator]


class InsufficientPointsError(ValueError):
    """Fewer than the required usable points (or decades) for an exponent fit."""


@dataclass(frozen=True)
class ConvergenceRow:
    x: int
    empirical: Union[int, float]
    predicted: float
    predicted_error: float
    residual: float
    scaled_residual: float
    claimed_exponent: float

    def to_dict(self) -> Dict[str, Union[int, float]]:
        return {
            "x": self.x,
            "empirical": self.empirical,
            "predicted": self.predicted,
            "residual": self.residual,
            "scaled_residual": self.scaled_residual,
        }


@dataclass(frozen=True)
class DistributionRow:
    stat: str
    x: int
    k: int
    count: int
    empirical: float
    limit: float
    residual: float

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ExponentFit:
    claimed: float
    fitted_slope: float
    points: int
    passed: bool

    def to_dict(self):
        return {"claimed": self.claimed, "fitted_slope": self.fitted_slope, "points": self.points, "pass": self.passed}


def geometric_grid(max_x: int, base: int = 10 ** 4) -> List[int]:
    """x = base * 2^i up to max_x (just [max_x] below the base)"""
    if max_x < 1:
        raise ValueError(f"max_x must be >= 1, got {max_x}")
    if max_x < base:
        return [max_x]
    grid = []
    x = base
    while x <= max_x:
        grid.append(x)
        x *= 2
    return grid


def decade_grid(max_x: int, start: int = 10 ** 4) -> List[int]:
    grid = []
    x = start
    while x <= max_x:
        grid.append(x)
        x *= 10
    return grid


def _make_row(x: int, empirical, main: ConstantEstimate, theta: float) -> ConvergenceRow:
    residual = float(Fraction(empirical) - Fraction(main.value)) if isinstance(empirical, (int, Fraction)) else empirical - main.value
    emp = empirical if isinstance(empirical, int) else float(empirical)
    return ConvergenceRow(x, emp, main.value, main.abs_error_bound, residual, residual / x ** theta, theta)


# --------------------------------------------------------------------------
# predictions
# --------------------------------------------------------------------------

def moment_prediction(stat: str, power: int) -> Tuple[Callable[[int], ConstantEstimate], float]:
    """(x -> predicted main term, claimed residual exponent)"""
    if stat == "M" and power == 1:
        b1 = compute_B1()
        return (lambda x: b1 * x), 0.5
    if stat == "M" and power == 2:
        b2 = compute_B2()
        return (lambda x: b2 * x), 0.5
    g02, g03, g12 = gamma0(2), gamma0(3), gamma1(2)
    if stat == "m" and power == 1:
        c3 = g03 + g12
        return (lambda x: g02 * math.sqrt(x) + c3 * x ** (1 / 3) + x), 0.25
    if stat == "m" and power == 2:
        c3 = 3 * g12 + 5 * g03
        return (lambda x: 3 * g02 * math.sqrt(x) + c3 * x ** (1 / 3) + x), 0.25
    raise ValueError(f"Unknown moment: stat={stat}, power={power}")


def _moment_sum(acc: ScanAccumulator, stat: str, power: int) -> int:
    if stat == "M":
        return acc.sum_max if power == 1 else acc.sum_max_sq
    if stat == "m":
        return acc.sum_min if power == 1 else acc.sum_min_sq
    raise ValueError(f"Unknown stat: {stat}")


def _snapshots(xs: Sequence[int], snapshots: Optional[Snapshots], ks: Iterable[int] = (), workers: int = 1) -> Snapshots:
    xs = list(xs)
    if xs != sorted(set(xs)):
        raise ValueError("xs must be strictly increasing")
    if snapshots is None:
        snapshots = scan_checkpoints(xs, ks, workers=workers)
    missing = [x for x in xs if x not in snapshots]
    if missing:
        raise ValueError(f"No scan snapshot for x = {missing}")
    return snapshots


# --------------------------------------------------------------------------
# tables
# --------------------------------------------------------------------------

def moment_table(stat: str, power: int, xs: Sequence[int], snapshots: Optional[Snapshots] = None, workers: int = 1) -> List[ConvergenceRow]:
    """Exact sum_{n<=x} stat(n)^power against its main term at each x."""
    predict, theta = moment_prediction(stat, power)
    snapshots = _snapshots(xs, snapshots, workers=workers)
    return [_make_row(x, _moment_sum(snapshots[x], stat, power), predict(x), theta) for x in xs]


def variance_table(stat: str, xs: Sequence[int], snapshots: Optional[Snapshots] = None, workers: int = 1) -> List[ConvergenceRow]:
    """
    M: (1/x) sum (M - B1)^2 against B2 - B1^2, residual O(x^-1/2).
    m: (1/x) sum (m - 1)^2 against gamma_{0,2} x^-1/2 + (3 gamma_{0,3} + gamma_{1,2}) x^-2/3,
       residual O(x^-3/4).
    """
    snapshots = _snapshots(xs, snapshots, workers=workers)
    rows = []
    if stat == "M":
        b1 = compute_B1()
        var = compute_varM()
        for x in xs:
            acc = snapshots[x]
            empirical = (acc.sum_max_sq - 2 * b1.value * acc.sum_max + b1.value ** 2 * x) / x
            # B1 enters the empirical side; its error moves the row by at most 2|mean - B1| eB1
            spread = 2 * abs(acc.sum_max / x - b1.value) * b1.abs_error_bound
            main = ConstantEstimate(var.value, var.abs_error_bound + spread, var.method)
            rows.append(_make_row(x, empirical, main, -0.5))
    elif stat == "m":
        g02, g03, g12 = gamma0(2), gamma0(3), gamma1(2)
        c3 = 3 * g03 + g12
        for x in xs:
            acc = snapshots[x]
            empirical = Fraction(acc.sum_min_sq - 2 * acc.sum_min + x, x)
            main = g02 * x ** -0.5 + c3 * x ** (-2 / 3)
            rows.append(_make_row(x, empirical, main, -0.75))
    else:
        raise ValueError(f"Unknown stat: {stat}")
    return rows


def _limit_law(stat: str, k_max: int) -> Tuple[List[float], Tuple[int, ...], int]:
    """(limit pmf indexed by value, scan ks needed, first value)"""
    if stat == "M":
        dist = builtin_distribution("f1")
        return [pmf(dist, k) for k in range(k_max + 1)], (), 1
    if stat == "m":
        dist = builtin_distribution("degenerate")
        return [pmf(dist, k) for k in range(k_max + 1)], (), 1
    head, _, arg = stat.partition(":")
    if head == "omega" and arg:
        k = int(arg)
        table = e_table(ExponentSequence(SequenceTag.INDICATOR, k), k_max)
        return [e.value for e in table], (k,), 0
    if head == "omegaA" and arg in ("S", "E", "O"):
        table = e_table(ExponentSequence(SequenceTag(arg)), k_max)
        return [e.value for e in table], (), 0
    raise ValueError(f"Unknown distribution stat: {stat}")


def _histogram(acc: ScanAccumulator, stat: str) -> Dict[int, int]:
    if stat == "M":
        return acc.hist_max
    if stat == "m":
        return acc.hist_min
    head, _, arg = stat.partition(":")
    if head == "omega":
        k = int(arg)
        if k not in acc.hist_omega:
            raise ValueError(f"Scan did not track omega_{k}")
        return acc.hist_omega[k]
    return acc.hist_omega_a[arg]


def value_distribution_table(stat: str, x: int, k_max: int, snapshot: Optional[ScanAccumulator] = None) -> List[DistributionRow]:
    """
    Empirical P_x(stat = k) against the limit law: f1 for M, the point mass
    at 1 for m, e_{k,m} for omega:K and e_{A,m} for omegaA:S|E|O.
    """
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    limit, ks, first = _limit_law(stat, k_max)
    if snapshot is None:
        snapshot = scan_checkpoints([x], ks)[x]
    hist = _histogram(snapshot, stat)
    rows = []
    for k in range(first, k_max + 1):
        count = hist.get(k, 0)
        empirical = count / x
        rows.append(DistributionRow(stat, x, k, count, empirical, limit[k], empirical - limit[k]))
    return rows


def count_table(kind: str, k: int, xs: Sequence[int]) -> List[ConvergenceRow]:
    """
    k_full: N_k(x) against gamma_{0,k} x^(1/k) + gamma_{1,k} x^(1/(k+1)), residual O(x^(1/(k+2))).
    k_free: S_k(x) against x / zeta(k), residual O(x^(1/k)).
    """
    rows = []
    if kind == "k_full":
        g0, g1 = gamma0(k), gamma1(k)
        for x in xs:
            main = g0 * x ** (1 / k) + g1 * x ** (1 / (k + 1))
            rows.append(_make_row(x, count_k_full(x, k).count, main, 1 / (k + 2)))
    elif kind == "k_free":
        inv = 1 / zeta(float(k))
        for x in xs:
            rows.append(_make_row(x, count_k_free_moebius(x, k).count, inv * x, 1 / k))
    else:
        raise ValueError(f"Unknown count kind: {kind}")
    return rows


def error_exponent_fit(
    rows: Sequence[ConvergenceRow],
    claimed: float,
    slack: float = FIT_SLACK,
    min_points: int = MIN_FIT_POINTS,
    min_decades: float = MIN_FIT_DECADES,
) -> ExponentFit:
    """
    Least-squares slope of log|residual| against log x. Rows whose residual
    is zero or within NOISE_FACTOR times the prediction's error bound carry
    no signal and are dropped.
    """
    usable = [r for r in rows if r.residual != 0 and abs(r.residual) >= NOISE_FACTOR * r.predicted_error]
    if len(usable) < min_points:
        raise InsufficientPointsError(f"Need {min_points} usable rows, have {len(usable)}")
    xs = np.array([r.x for r in usable], dtype=np.float64)
    decades = math.log10(xs.max() / xs.min())
    if decades < min_decades:
        raise InsufficientPointsError(f"Rows span {decades:.2f} decades, need {min_decades}")
    ys = np.log(np.abs([r.residual for r in usable]))
    slope = float(np.polyfit(np.log(xs), ys, 1)[0])
    return ExponentFit(claimed, slope, len(usable), slope <= claimed + slack)


def rows_frame(rows: Sequence[ConvergenceRow]) -> pd.DataFrame:
    """CSV-ready frame with columns x, empirical, predicted, residual, scaled_residual"""
    return pd.DataFrame([r.to_dict() for r in rows], columns=ROW_COLUMNS)


# --------------------------------------------------------------------------
# exact identities
# --------------------------------------------------------------------------

def _identity(name: str, lhs: int, rhs: int) -> Dict[str, object]:
    return {"name": name, "pass": lhs == rhs, "detail": f"{lhs} vs {rhs}"}


def _max_exponent(x: int) -> int:
    return max(1, x.bit_length() - 1)


def identity_checks(x: int, acc: ScanAccumulator) -> List[Dict[str, object]]:
    """
    Exact identities combining the scan with independent counts:
      sum m   = x + sum_{k>=2} (N_k(x) - 1)
      sum m^2 = x + sum_{k>=2} (2k - 1)(N_k(x) - 1)
      sum M   = x + sum_{k>=2} (x - S_k(x))
      sum M^2 = x + sum_{k>=2} (2k - 1)(x - S_k(x))
      #{M = 1} = S_2(x), #{M = k-1} = S_k(x) - S_{k-1}(x) for k >= 3
      #{m = 1} = x - N_2(x) + 1, #{m = k-1} = N_{k-1}(x) - N_k(x) for k >= 3
    The +1 terms are the n = 1 boundary (M(1) = m(1) = 1).
    """
    if acc.count != x:
        raise ValueError(f"Accumulator covers {acc.count} integers, not x = {x}")
    top = _max_exponent(x)
    full = {k: k_full_count(x, k) for k in range(1, top + 2)}
    free = {k: k_free_count(x, k) for k in range(1, top + 2)}
    ks = range(2, top + 1)

    checks = [
        _identity(f"sum_m_identity@{x}", acc.sum_min, x + sum(full[k] - 1 for k in ks)),
        _identity(f"sum_m2_identity@{x}", acc.sum_min_sq, x + sum((2 * k - 1) * (full[k] - 1) for k in ks)),
        _identity(f"sum_M_identity@{x}", acc.sum_max, x + sum(x - free[k] for k in ks)),
        _identity(f"sum_M2_identity@{x}", acc.sum_max_sq, x + sum((2 * k - 1) * (x - free[k]) for k in ks)),
        _identity(f"hist_M_sum@{x}", sum(k * c for k, c in acc.hist_max.items()), acc.sum_max),
        _identity(f"hist_m_sum@{x}", sum(k * c for k, c in acc.hist_min.items()), acc.sum_min),
    ]

    m_big_ok = acc.hist_max.get(1, 0) == free[2] and all(
        acc.hist_max.get(k - 1, 0) == free[k] - free[k - 1] for k in range(3, top + 2)
    )
    m_small_ok = acc.hist_min.get(1, 0) == x - full[2] + 1 and all(
        acc.hist_min.get(k - 1, 0) == full[k - 1] - full[k] for k in range(3, top + 2)
    )
    checks.append({"name": f"hist_M_complementarity@{x}", "pass": m_big_ok, "detail": "S_k differences"})
    checks.append({"name": f"hist_m_complementarity@{x}", "pass": m_small_ok, "detail": "N_k differences"})
    return checks
