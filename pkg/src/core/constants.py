"""
PrimExp - Certified Constants
Every constant carries an absolute error bound that is a proven bound for
the truncation performed plus a floating-point rounding allowance.

    zeta(s), s > 1        partial sum + Euler-Maclaurin tail          "series"
    zeta(s), 0 < s < 1    Borwein acceleration of eta(s)              "eta_continuation"
    P(s) = sum_p p^-s     sum_n mu(n)/n log zeta(ns)                  "moebius_log_zeta"
    gamma_{0,k}, gamma_{1,k}   accelerated Euler products             "euler_product"
    e_{A,m}               Poisson-binomial law of omega_A             "euler_product" / "enumeration"
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from src.core.counting import enumerate_k_full, moebius_up_to
from src.core.exponents import ExponentSequence, SequenceTag
from src.core.primes import cached_primes, primes_up_to

if TYPE_CHECKING:
    from src.core.distribution import ArithmeticF

logger = logging.getLogger(__name__)

EPS = float(np.finfo(float).eps)

# B_2, B_4, ..., B_22
_BERNOULLI = (
    Fraction(1, 6), Fraction(-1, 30), Fraction(1, 42), Fraction(-1, 30), Fraction(5, 66),
    Fraction(-691, 2730), Fraction(7, 6), Fraction(-3617, 510), Fraction(43867, 798),
    Fraction(-174611, 330), Fraction(854513, 138),
)
_EM_CUTOFF = 20
_EM_TERMS = 10
_BORWEIN_TERMS = 40

DEFAULT_EULER_PRIME_LIMIT = 2 ** 17
MAX_EULER_PRIME_LIMIT = 2 ** 23
E_HEAD_PRIME_LIMIT = 2 ** 14
LOCAL_MASS_ORDER = 64

# N_2(t) <= C sqrt(t) with C = zeta(3/2)/zeta(3): every square-full n is
# uniquely a^2 b^3 with b squarefree, so N_2(t) <= sqrt(t) sum_b b^(-3/2).
SQUAREFULL_COUNT_CONSTANT_ARGS = (1.5, 3.0)

# Rosser-Schoenfeld: pi(t) < 1.25506 t / log t for t > 1
_PI_UPPER = 1.25506


class ToleranceUnreachableError(ValueError):
    """No feasible truncation certifies the requested tolerance."""


Number = Union[int, float]


@dataclass(frozen=True)
class ConstantEstimate:
    value: float
    abs_error_bound: float
    method: str

    def __post_init__(self):
        if not math.isfinite(self.abs_error_bound) or self.abs_error_bound < 0:
            raise ValueError(f"Error bound must be finite and >= 0, got {self.abs_error_bound}")

    @staticmethod
    def exact(value: Number, method: str = "exact") -> "ConstantEstimate":
        return ConstantEstimate(float(value), 0.0, method)

    def _join(self, other: "ConstantEstimate") -> str:
        return self.method if self.method == other.method else "derived"

    def _coerce(self, other) -> "ConstantEstimate":
        if isinstance(other, ConstantEstimate):
            return other
        return ConstantEstimate(float(other), 0.0, self.method)

    def __add__(self, other) -> "ConstantEstimate":
        other = self._coerce(other)
        value = self.value + other.value
        err = self.abs_error_bound + other.abs_error_bound + EPS * abs(value)
        return ConstantEstimate(value, err, self._join(other))

    __radd__ = __add__

    def __neg__(self) -> "ConstantEstimate":
        return ConstantEstimate(-self.value, self.abs_error_bound, self.method)

    def __sub__(self, other) -> "ConstantEstimate":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "ConstantEstimate":
        return self._coerce(other) - self

    def __mul__(self, other) -> "ConstantEstimate":
        other = self._coerce(other)
        value = self.value * other.value
        err = (
            abs(self.value) * other.abs_error_bound
            + abs(other.value) * self.abs_error_bound
            + self.abs_error_bound * other.abs_error_bound
            + EPS * abs(value)
        )
        return ConstantEstimate(value, err, self._join(other))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "ConstantEstimate":
        other = self._coerce(other)
        margin = abs(other.value) - other.abs_error_bound
        if margin <= 0:
            raise ZeroDivisionError("Divisor interval contains zero")
        value = self.value / other.value
        err = (self.abs_error_bound + abs(value) * other.abs_error_bound) / margin + EPS * abs(value)
        return ConstantEstimate(value, err, self._join(other))

    def __rtruediv__(self, other) -> "ConstantEstimate":
        return self._coerce(other) / self

    def contains(self, x: float) -> bool:
        return abs(x - self.value) <= self.abs_error_bound

    def agrees_with(self, other: "ConstantEstimate", slack: float = 0.0) -> bool:
        return abs(self.value - other.value) <= self.abs_error_bound + other.abs_error_bound + slack

    def to_dict(self) -> Dict[str, object]:
        return {"value": self.value, "error_bound": self.abs_error_bound, "method": self.method}


# --------------------------------------------------------------------------
# zeta
# --------------------------------------------------------------------------

def _euler_maclaurin(s: float, start: int) -> Tuple[float, float]:
    """sum_{n >= start} n^-s for s > 1; returns (value, error bound)"""
    n_cut = _EM_CUTOFF
    head = [n ** -s for n in range(start, n_cut)]
    parts = [math.fsum(head), n_cut ** (1 - s) / (s - 1), 0.5 * n_cut ** -s]

    # poch = s (s+1) ... (s+2j-2)
    poch = s
    for j in range(1, _EM_TERMS + 1):
        coeff = float(_BERNOULLI[j - 1]) / math.factorial(2 * j)
        parts.append(coeff * poch * n_cut ** (-s - 2 * j + 1))
        poch *= (s + 2 * j - 1) * (s + 2 * j)

    # for real s > 1 the remainder is bounded by the first omitted term
    j = _EM_TERMS + 1
    omitted = float(abs(_BERNOULLI[j - 1])) / math.factorial(2 * j) * poch * n_cut ** (-s - 2 * j + 1)
    value = math.fsum(parts)
    err = 2 * omitted + 8 * EPS * math.fsum(abs(x) for x in parts)
    return value, err


def _borwein_weights(n: int) -> List[float]:
    """(d_n - d_k) / d_n for k < n, with d_k = n sum_{i<=k} (n+i-1)! 4^i / ((n-i)! (2i)!)"""
    d = []
    acc = Fraction(0)
    for i in range(n + 1):
        acc += Fraction(math.factorial(n + i - 1) * 4 ** i, math.factorial(n - i) * math.factorial(2 * i))
        d.append(n * acc)
    return [float((d[n] - d[k]) / d[n]) for k in range(n)]


@lru_cache(maxsize=1)
def _cached_borwein_weights() -> Tuple[float, ...]:
    return tuple(_borwein_weights(_BORWEIN_TERMS))


def _eta(s: float) -> Tuple[float, float]:
    """
    Dirichlet eta by Borwein's algorithm. For real s > 0 the truncation error
    is at most 3 / ((3 + sqrt 8)^n Gamma(s)).
    """
    n = _BORWEIN_TERMS
    weights = _cached_borwein_weights()
    terms = [(-1) ** k * weights[k] / (k + 1) ** s for k in range(n)]
    value = math.fsum(terms)
    err = 3.0 / ((3 + math.sqrt(8)) ** n * math.gamma(s)) + 4 * EPS * math.fsum(abs(t) for t in terms)
    return value, err


@lru_cache(maxsize=512)
def zeta(s: float) -> ConstantEstimate:
    """Riemann zeta for real s > 0, s != 1."""
    if s <= 0:
        raise ValueError(f"zeta needs s > 0, got {s}")
    if s == 1:
        raise ValueError("zeta has a pole at s = 1")
    if s > 1:
        value, err = _euler_maclaurin(s, 1)
        return ConstantEstimate(value, err, "series")

    eta, eta_err = _eta(s)
    factor = 1.0 - 2.0 ** (1 - s)
    value = eta / factor
    err = (eta_err + 2 * EPS * abs(eta)) / abs(factor) + 2 * EPS * abs(value)
    return ConstantEstimate(value, err, "eta_continuation")


@lru_cache(maxsize=512)
def zeta_minus_one(s: float) -> ConstantEstimate:
    """zeta(s) - 1 for s > 1 without cancellation (relative accuracy for large s)."""
    if s <= 1:
        raise ValueError(f"zeta_minus_one needs s > 1, got {s}")
    value, err = _euler_maclaurin(s, 2)
    return ConstantEstimate(value, err, "series")


def _log_zeta(s: float) -> Tuple[float, float]:
    zm1 = zeta_minus_one(s)
    value = math.log1p(zm1.value)
    return value, zm1.abs_error_bound + 2 * EPS * abs(value)


@lru_cache(maxsize=512)
def prime_zeta(s: float) -> ConstantEstimate:
    """
    P(s) = sum_p p^-s for s >= 2 via P(s) = sum_n mu(n)/n log zeta(ns).
    For r >= 2, |log zeta(r)| <= zeta(r) - 1 <= 3 * 2^-r, which bounds the
    dropped n > N terms by 3 * 2^-(N+1)s / ((N+1)(1 - 2^-s)).
    """
    if s < 2:
        raise ValueError(f"prime_zeta needs s >= 2, got {s}")

    def tail(n_terms: int) -> float:
        return 3 * 2.0 ** (-(n_terms + 1) * s) / ((n_terms + 1) * (1 - 2.0 ** -s))

    n_terms = 1
    while tail(n_terms) > 1e-20 and n_terms < 200:
        n_terms += 1

    mu = moebius_up_to(n_terms)
    terms = []
    err = tail(n_terms)
    for n in range(1, n_terms + 1):
        if mu[n] == 0:
            continue
        log_z, log_err = _log_zeta(n * s)
        terms.append(int(mu[n]) * log_z / n)
        err += log_err / n
    value = math.fsum(terms)
    err += 4 * EPS * math.fsum(abs(t) for t in terms)
    return ConstantEstimate(value, err, "moebius_log_zeta")


def _prime_tail_bound(s: float, prime_limit: int) -> float:
    """sum_{p > P} p^-s <= 1.25506 s / ((s - 1) log P) * P^(1-s)"""
    return _PI_UPPER * s / ((s - 1) * math.log(prime_limit)) * prime_limit ** (1 - s)


# --------------------------------------------------------------------------
# B1, B2
# --------------------------------------------------------------------------

def one_minus_inverse_zeta(k: int) -> ConstantEstimate:
    """1 - 1/zeta(k) = (zeta(k) - 1) / zeta(k)"""
    zm1 = zeta_minus_one(float(k))
    value = zm1.value / (1.0 + zm1.value)
    return ConstantEstimate(value, zm1.abs_error_bound + 2 * EPS * value, "series")


def _b_truncation(tol: float, weighted: bool) -> int:
    # 1 - 1/zeta(k) < 2^(1-k); tails: 2^(1-K) and (2K+3) 2^(1-K)
    k = 2
    while True:
        bound = (2 * k + 3) * 2.0 ** (1 - k) if weighted else 2.0 ** (1 - k)
        if bound <= tol / 2:
            return k
        k += 1


def _b_sums(tol: float) -> Tuple[float, float, float, float]:
    k_max = _b_truncation(tol, weighted=True)
    plain, weighted, err_plain, err_weighted = [], [], 0.0, 0.0
    for k in range(2, k_max + 1):
        t = one_minus_inverse_zeta(k)
        plain.append(t.value)
        weighted.append((2 * k - 1) * t.value)
        err_plain += t.abs_error_bound
        err_weighted += (2 * k - 1) * t.abs_error_bound
    s1 = math.fsum(plain)
    s2 = math.fsum(weighted)
    err_plain += 2.0 ** (1 - k_max) + 4 * EPS * s1
    err_weighted += (2 * k_max + 3) * 2.0 ** (1 - k_max) + 4 * EPS * s2
    return s1, err_plain, s2, err_weighted


def compute_B1(tol: float = 1e-12) -> ConstantEstimate:
    """B1 = 1 + sum_{k>=2} (1 - 1/zeta(k)), the mean of M(n)"""
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    s1, err, _, _ = _b_sums(tol)
    return ConstantEstimate(1.0 + s1, err + EPS, "series")


def compute_B2(tol: float = 1e-12) -> ConstantEstimate:
    """B2 = 1 + sum_{k>=2} (2k - 1)(1 - 1/zeta(k)), the second moment of M(n)"""
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    _, _, s2, err = _b_sums(tol)
    return ConstantEstimate(1.0 + s2, err + 4 * EPS, "series")


def compute_varM(tol: float = 1e-12) -> ConstantEstimate:
    """B2 - B1^2"""
    return compute_B2(tol) - compute_B1(tol) * compute_B1(tol)


# --------------------------------------------------------------------------
# gamma_{0,k}, gamma_{1,k}
# --------------------------------------------------------------------------

def _apply_one_minus(series: List[int], j: int, c: int):
    """series *= (1 - y^j)^c in place, truncated to len(series)"""
    top = len(series) - 1
    for _ in range(abs(c)):
        if c > 0:
            for i in range(top, j - 1, -1):
                series[i] -= series[i - j]
        else:
            for i in range(j, top + 1):
                series[i] += series[i - j]


@dataclass(frozen=True)
class EulerProductPlan:
    """
    F(y) = 1 + sum_m c_m y^m with y = p^(-1/d) rewritten as
    R(y) prod_j (1 - y^j)^(-c_j), where R(y) = 1 + O(y^J).
    """
    poly: Tuple[Tuple[int, int], ...]
    d: int
    zeta_powers: Tuple[Tuple[int, int], ...]
    remainder: Tuple[int, ...]
    cut: int

    @classmethod
    def build(cls, poly: Dict[int, int], d: int, cut: Optional[int] = None, order: Optional[int] = None) -> "EulerProductPlan":
        cut = cut or 4 * d
        order = order or 16 * d
        series = [0] * (order + 1)
        series[0] = 1
        for m, c in poly.items():
            series[m] += c
        powers = []
        for j in range(1, cut):
            c = series[j]
            if c == 0:
                continue
            if j <= d:
                raise ValueError(f"Local factor has a y^{j} term with j <= d = {d}; product diverges")
            _apply_one_minus(series, j, c)
            powers.append((j, c))
        return cls(tuple(sorted(poly.items())), d, tuple(powers), tuple(series), cut)

    def dominating_value(self, rho: float) -> float:
        """H(rho) for the series H majorizing the remainder's coefficients"""
        value = 1.0 + sum(abs(c) * rho ** m for m, c in self.poly)
        for j, c in self.zeta_powers:
            value *= (1 + rho ** j) ** c if c > 0 else (1 - rho ** j) ** c
        return value


def _euler_product(poly: Dict[int, int], d: int, prime_limit: int) -> ConstantEstimate:
    plan = EulerProductPlan.build(poly, d)
    primes = cached_primes(prime_limit).astype(np.float64)
    y = primes ** (-1.0 / d)

    poly_part = np.zeros_like(y)
    for m, c in plan.poly:
        poly_part += c * y ** m
    logs = [np.log1p(poly_part)]
    for j, c in plan.zeta_powers:
        logs.append(c * np.log1p(-(y ** j)))
    head = math.fsum(math.fsum(part.tolist()) for part in logs)
    head_err = 8 * EPS * math.fsum(float(np.abs(part).sum()) for part in logs)

    # tail over p > P: |log R(y)| <= 2|R(y) - 1| while |R(y) - 1| <= 1/2
    y_p = prime_limit ** (-1.0 / d)
    if 2 * y_p >= 1:
        raise ValueError(f"prime_limit {prime_limit} must exceed 4^{d}")
    order = len(plan.remainder) - 1
    h_half = plan.dominating_value(0.5)
    beyond = h_half * (2 * y_p) ** (order + 1) / (1 - 2 * y_p)
    u_max = sum(abs(plan.remainder[i]) * y_p ** i for i in range(plan.cut, order + 1)) + beyond
    if u_max > 0.5:
        raise ValueError(f"prime_limit {prime_limit} too small for this product")

    def t(s: float) -> float:
        # sum_{n > P} n^-s <= P^(1-s) / (s - 1)
        return prime_limit ** (1 - s) / (s - 1)

    tail = sum(abs(plan.remainder[i]) * t(i / d) for i in range(plan.cut, order + 1))
    tail += prime_limit * beyond / ((order + 1) / d - 1)
    log_value = head
    log_err = head_err + 2 * tail

    for j, c in plan.zeta_powers:
        z = zeta(j / d)
        log_value += c * math.log(z.value)
        log_err += abs(c) * z.abs_error_bound / (z.value - z.abs_error_bound)

    value = math.exp(log_value)
    err = value * math.expm1(log_err) + 4 * EPS * value
    return ConstantEstimate(value, err, "euler_product")


def _gamma0_poly(k: int) -> Dict[int, int]:
    return {m: 1 for m in range(k + 1, 2 * k)}


def _gamma1_poly(k: int) -> Dict[int, int]:
    poly = {m: 1 for m in range(k + 2, 2 * k)}
    for m in range(2 * k + 2, 3 * k + 1):
        poly[m] = poly.get(m, 0) - 1
    return poly


def _certified_product(poly: Dict[int, int], d: int, tol: float, prime_limit: Optional[int]) -> ConstantEstimate:
    limit = prime_limit or max(DEFAULT_EULER_PRIME_LIMIT, 2 * 4 ** d)
    while True:
        estimate = _euler_product(poly, d, limit)
        if estimate.abs_error_bound <= tol or prime_limit is not None:
            return estimate
        if limit >= MAX_EULER_PRIME_LIMIT:
            raise ToleranceUnreachableError(
                f"Euler product bound {estimate.abs_error_bound:.3e} above tol {tol:.1e} at prime limit {limit}"
            )
        limit *= 8


@lru_cache(maxsize=64)
def gamma0(k: int, tol: float = 1e-12, method: Optional[str] = None, prime_limit: Optional[int] = None) -> ConstantEstimate:
    """gamma_{0,k} = prod_p (1 + sum_{m=k+1}^{2k-1} p^(-m/k)); zeta(3/2)/zeta(3) for k = 2"""
    if k < 2:
        raise ValueError(f"gamma0 needs k >= 2, got {k}")
    method = method or ("closed_form" if k == 2 else "euler_product")
    if method == "closed_form":
        if k != 2:
            raise ValueError("closed form is only available for k = 2")
        return zeta(1.5) / zeta(3.0)
    return _certified_product(_gamma0_poly(k), k, tol, prime_limit)


@lru_cache(maxsize=64)
def gamma1(k: int, tol: float = 1e-12, method: Optional[str] = None, prime_limit: Optional[int] = None) -> ConstantEstimate:
    """
    gamma_{1,k} = zeta(k/(k+1)) prod_p (1 + sum_{m=k+2}^{2k-1} p^(-m/(k+1))
                                          - sum_{m=2k+2}^{3k} p^(-m/(k+1)));
    zeta(2/3)/zeta(2) for k = 2 (negative).
    """
    if k < 2:
        raise ValueError(f"gamma1 needs k >= 2, got {k}")
    method = method or ("closed_form" if k == 2 else "euler_product")
    prefactor = zeta(k / (k + 1))
    if method == "closed_form":
        if k != 2:
            raise ValueError("closed form is only available for k = 2")
        return prefactor / zeta(2.0)
    product = _certified_product(_gamma1_poly(k), k + 1, tol / max(1.0, abs(prefactor.value)), prime_limit)
    result = prefactor * product
    return ConstantEstimate(result.value, result.abs_error_bound, "euler_product")


# --------------------------------------------------------------------------
# D1, D2 for arithmetic functions
# --------------------------------------------------------------------------

def smallest_truncation(tail: Callable[[int], float], target: float, max_terms: int, name: str = "sum") -> int:
    """Smallest K >= 1 with tail(K) <= target, for a non-increasing tail bound."""
    if tail(1) <= target:
        return 1
    hi = 2
    while tail(hi) > target:
        if hi >= max_terms:
            raise ToleranceUnreachableError(f"{name}: tail bound cannot reach {target:.1e} within {max_terms} terms")
        hi *= 2
    lo = hi // 2 + 1
    while lo < hi:
        mid = (lo + hi) // 2
        if tail(mid) <= target:
            hi = mid
        else:
            lo = mid + 1
    return hi


def _d_truncation(f: "ArithmeticF", tol: float, weighted: bool, max_terms: int) -> int:
    if f.tail.support is not None:
        return max(f.tail.support - 1, 1)
    tail = f.tail.weighted_sum_from if weighted else f.tail.sum_from
    return smallest_truncation(lambda k: tail(k + 1), tol / 2, max_terms, f.name)


def _d_sum(f: "ArithmeticF", tol: float, weighted: bool, max_terms: int) -> ConstantEstimate:
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    k_max = _d_truncation(f, tol, weighted, max_terms)
    terms = [(2 * k - 1 if weighted else 1) * f.complement(k) for k in range(2, k_max + 1)]
    value = math.fsum(terms)
    weight = sum((2 * k - 1 if weighted else 1) for k in range(2, k_max + 1))
    err = weight * f.eval_error + 4 * EPS * math.fsum(abs(t) for t in terms)
    if f.tail.support is None:
        tail = f.tail.weighted_sum_from if weighted else f.tail.sum_from
        err += tail(k_max + 1)
        method = "truncated_sum"
    else:
        method = "finite_sum"
    if err > tol:
        raise ToleranceUnreachableError(f"{f.name}: certified error {err:.3e} exceeds tol {tol:.1e}")
    return ConstantEstimate(value, err, method)


def compute_D1(f: "ArithmeticF", tol: float = 1e-12, max_terms: int = 2 ** 20) -> ConstantEstimate:
    """D1 = sum_{k>=2} (1 - f(k))"""
    return _d_sum(f, tol, weighted=False, max_terms=max_terms)


def compute_D2(f: "ArithmeticF", tol: float = 1e-12, max_terms: int = 2 ** 20) -> ConstantEstimate:
    """D2 = D1 + 2 sum_{k>=2} (k - 1)(1 - f(k)) = sum_{k>=2} (2k - 1)(1 - f(k))"""
    return _d_sum(f, tol, weighted=True, max_terms=max_terms)


# --------------------------------------------------------------------------
# omega_A limiting law
# --------------------------------------------------------------------------

def local_mass(seq: ExponentSequence, primes: np.ndarray) -> np.ndarray:
    """q_p = sum_j a_j (1 - 1/p) p^-j, the density of integers whose p-part adds 1 to omega_A"""
    if seq.tag == SequenceTag.EXCESS:
        raise ValueError("omega_A law needs a 0/1 sequence")
    p = primes.astype(np.float64)
    if seq.tag == SequenceTag.S:
        return 1.0 / (p * p)
    if seq.tag == SequenceTag.E:
        return 1.0 / (p * (p + 1))
    if seq.tag == SequenceTag.O:
        return 1.0 / (p * p * (p + 1))
    return (p - 1) / p ** (seq.k + 1)


@lru_cache(maxsize=64)
def lambda_mass(seq: ExponentSequence) -> ConstantEstimate:
    """sum_p q_p = sum_r c_r P(r), the mean of the limiting law of omega_A"""
    coeffs = seq.local_mass_coefficients(LOCAL_MASS_ORDER)
    terms = []
    err = 0.0
    for r, c in coeffs.items():
        pz = prime_zeta(float(r))
        terms.append(c * pz.value)
        err += abs(c) * pz.abs_error_bound
    # |c_r| <= 1 and P(r) <= 3 * 2^-r beyond the order
    err += 3 * 2.0 ** -LOCAL_MASS_ORDER
    value = math.fsum(terms)
    err += 4 * EPS * math.fsum(abs(t) for t in terms)
    return ConstantEstimate(value, err, "moebius_log_zeta")


def _poisson_coefficients(lam: float, m_max: int) -> np.ndarray:
    out = np.empty(m_max + 1)
    term = math.exp(-lam)
    for m in range(m_max + 1):
        out[m] = term
        term *= lam / (m + 1)
    return out


@lru_cache(maxsize=64)
def _e_table_product(seq: ExponentSequence, m_max: int, head_limit: int) -> Tuple[ConstantEstimate, ...]:
    """
    e_{A,m} are the coefficients of prod_p (1 - q_p + q_p z). Primes up to
    head_limit are multiplied out exactly; the rest is replaced by
    exp(lambda_T (z - 1)). Le Cam: the coefficient error is at most
    2 sum_{p > P} q_p^2 <= 2 P^-3 / 3 (q_p <= p^-2), plus 2|delta lambda_T|.
    """
    primes = cached_primes(head_limit)
    q = local_mass(seq, primes)
    coeffs = np.zeros(m_max + 1)
    coeffs[0] = 1.0
    for qp in q.tolist():
        shifted = np.concatenate(([0.0], coeffs[:-1]))
        coeffs = (1.0 - qp) * coeffs + qp * shifted

    total = lambda_mass(seq)
    head_sum = math.fsum(q.tolist())
    lam_tail = total.value - head_sum
    lam_err = total.abs_error_bound + 4 * EPS * len(q) * head_sum
    poisson = _poisson_coefficients(lam_tail, m_max)
    combined = np.convolve(coeffs, poisson)[: m_max + 1]

    le_cam = 2 * head_limit ** -3.0 / 3
    rounding = (3 * len(q) + 4 * (m_max + 1)) * EPS
    err = le_cam + 2 * lam_err + rounding
    return tuple(ConstantEstimate(float(v), err, "euler_product") for v in combined)


def _squarefull_count_constant() -> ConstantEstimate:
    a, b = SQUAREFULL_COUNT_CONSTANT_ARGS
    return zeta(a) / zeta(b)


def _e_enumeration(seq: ExponentSequence, m: int, tol: float) -> ConstantEstimate:
    """
    (6/pi^2) sum over square-full l <= L with omega_A(l) = m of
    (1/l) prod_{p | l} (1 + 1/p)^-1. The omitted l > L weigh at most
    (6/pi^2) sum_{l > L} 1/l <= (6/pi^2) 2C / sqrt(L) by partial summation.
    """
    density = 6.0 / math.pi ** 2
    c_bound = _squarefull_count_constant()
    c_upper = c_bound.value + c_bound.abs_error_bound
    limit = math.ceil((density * 2 * c_upper / (tol / 2)) ** 2)
    if limit > 10 ** 12:
        raise ToleranceUnreachableError(f"Enumeration would need square-full l up to {limit:.3e}")
    logger.debug(f"Enumerating square-full l <= {limit}")

    terms = []
    for sig in enumerate_k_full(limit, 2):
        if sum(seq.coefficient(e) for e in sig.exponents) != m:
            continue
        weight = 1.0 / sig.n
        for p, _ in sig.factors:
            weight *= p / (p + 1.0)
        terms.append(weight)
    value = density * math.fsum(terms)
    err = density * 2 * c_upper / math.sqrt(limit) + 4 * EPS * (len(terms) + 1) * max(value, EPS)
    return ConstantEstimate(value, err, "enumeration")


def e_table(seq: ExponentSequence, m_max: int, head_limit: int = E_HEAD_PRIME_LIMIT) -> List[ConstantEstimate]:
    """e_{A,0}, ..., e_{A,m_max}; the common error bound also holds for the vector in l1"""
    if m_max < 0:
        raise ValueError(f"m_max must be >= 0, got {m_max}")
    return list(_e_table_product(seq, m_max, head_limit))


def compute_e_km(
    k: int,
    m: int,
    tol: float = 1e-10,
    method: str = "euler_product",
    seq: Optional[ExponentSequence] = None,
) -> ConstantEstimate:
    """Density e_{k,m} of integers with omega_k(n) = m (or omega_A(n) = m for seq)."""
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    seq = seq or ExponentSequence(SequenceTag.INDICATOR, k)
    if method == "enumeration":
        return _e_enumeration(seq, m, tol)
    if method != "euler_product":
        raise ValueError(f"Unknown e_km method: {method}")
    estimate = e_table(seq, m)[m]
    if estimate.abs_error_bound > tol:
        raise ToleranceUnreachableError(f"e_km bound {estimate.abs_error_bound:.3e} exceeds tol {tol:.1e}")
    return estimate


# --------------------------------------------------------------------------
# prime sums for the f_{2,k} moments
# --------------------------------------------------------------------------

def _direct_prime_sum(exponents: Dict[float, int], prime_limit: int) -> ConstantEstimate:
    """sum_p sum_s c_s p^-s over p <= P, plus the Rosser-Schoenfeld tail"""
    primes = primes_up_to(prime_limit).astype(np.float64)
    parts = []
    tail = 0.0
    for s, c in exponents.items():
        parts.append(c * math.fsum((primes ** -s)[::-1].tolist()))
        tail += abs(c) * _prime_tail_bound(s, prime_limit)
    value = math.fsum(parts)
    err = tail + 4 * EPS * len(primes) * math.fsum(abs(x) for x in parts)
    return ConstantEstimate(value, err, "direct")


def prime_sum_mean(k: int, tol: float = 1e-12, method: str = "prime_zeta", prime_limit: int = 10 ** 7) -> ConstantEstimate:
    """sum_p (p - 1) / p^(k+1) = P(k) - P(k+1)"""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if method == "direct":
        estimate = _direct_prime_sum({float(k): 1, float(k + 1): -1}, prime_limit)
    elif method == "prime_zeta":
        estimate = prime_zeta(float(k)) - prime_zeta(float(k + 1))
    else:
        raise ValueError(f"Unknown prime-sum method: {method}")
    if estimate.abs_error_bound > tol:
        logger.warning(f"prime_sum_mean({k}) bound {estimate.abs_error_bound:.3e} above tol {tol:.1e}")
    return estimate


def prime_sum_second(k: int, tol: float = 1e-12, method: str = "prime_zeta", prime_limit: int = 10 ** 7) -> ConstantEstimate:
    """mu (mu + 1) - sum_p p^-2k + 2 sum_p p^-(2k+1) - sum_p p^-(2k+2)"""
    mean = prime_sum_mean(k, tol, method, prime_limit)
    if method == "direct":
        squares = _direct_prime_sum({float(2 * k): 1, float(2 * k + 1): -2, float(2 * k + 2): 1}, prime_limit)
    else:
        squares = prime_zeta(float(2 * k)) - 2 * prime_zeta(float(2 * k + 1)) + prime_zeta(float(2 * k + 2))
    return mean * (mean + 1) - squares


def constants_report(tol: float = 1e-12, ks=range(2, 6), e_grid: Dict[int, int] = None) -> Dict[str, Dict[str, object]]:
    """All constants keyed as B1, B2, varM, gamma0_k, gamma1_k, e_{k,m}"""
    e_grid = e_grid or {2: 4, 3: 3}
    report = {
        "B1": compute_B1(tol).to_dict(),
        "B2": compute_B2(tol).to_dict(),
        "varM": compute_varM(tol).to_dict(),
    }
    for k in ks:
        report[f"gamma0_{k}"] = gamma0(k, max(tol, 1e-12)).to_dict()
        report[f"gamma1_{k}"] = gamma1(k, max(tol, 1e-12)).to_dict()
    for k, m_max in e_grid.items():
        table = e_table(ExponentSequence(SequenceTag.INDICATOR, k), m_max)
        for m, estimate in enumerate(table):
            report[f"e_{k}_{m}"] = estimate.to_dict()
    return report
