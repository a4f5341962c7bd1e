"""
PrimExp - Exponent Statistics
Per-integer exponent statistics M(n), m(n), omega_k(n) and omega_A(n) computed
from an exact factorization. This is the slow reference path; the segmented
scan in src/engines/scan_engine.py must agree with it exactly.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Tuple

from src.core.primes import cached_primes, is_prime, pollard_brent

logger = logging.getLogger(__name__)

WORD_LIMIT = 2 ** 63 - 1
TRIAL_DIVISION_LIMIT = 2 ** 16


class SequenceTag(Enum):
    """Coefficient sequences A = (a_2, a_3, ...) for omega_A"""
    S = "S"                  # all ones
    E = "E"                  # 1 at even j
    O = "O"                  # 1 at odd j
    INDICATOR = "indicator"  # 1 at j = k only
    EXCESS = "excess"        # a_j = j - 1, gives Omega(n) - omega(n)


@dataclass(frozen=True)
class PrimeSignature:
    """Exact factorization n = p_1^a_1 ... p_r^a_r with p_1 < ... < p_r"""
    n: int
    factors: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"PrimeSignature needs n >= 1, got {self.n}")
        product = 1
        last = 1
        for p, e in self.factors:
            if p <= last:
                raise ValueError(f"Primes must be strictly increasing: {self.factors}")
            if e < 1:
                raise ValueError(f"Exponent of {p} must be >= 1, got {e}")
            product *= p ** e
            last = p
        if product != self.n:
            raise ValueError(f"Factors {self.factors} do not multiply to {self.n}")

    @property
    def exponents(self) -> List[int]:
        return [e for _, e in self.factors]


@dataclass(frozen=True)
class ExponentSummary:
    """(M(n), m(n), omega_k(n) for configured k) for one integer"""
    n: int
    max_exp: int
    min_exp: int
    omega_counts: Dict[int, int] = field(default_factory=dict)
    omega_a: Dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class ExponentSequence:
    """
    A coefficient sequence a_j (j >= 2). S, E, O and indicator(k) are 0/1
    sequences; EXCESS (a_j = j - 1) is only meaningful for omega_A itself.
    """
    tag: SequenceTag
    k: Optional[int] = None

    def __post_init__(self):
        if self.tag == SequenceTag.INDICATOR:
            if self.k is None or self.k < 2:
                raise ValueError(f"indicator(k) requires k >= 2, got {self.k}")
        elif self.k is not None:
            raise ValueError(f"Sequence {self.tag.value} takes no k")

    @classmethod
    def parse(cls, name: str) -> "ExponentSequence":
        """Accepts S, E, O, excess, indicator:K (alias omega:K)"""
        key = name.strip()
        if key in ("S", "E", "O"):
            return cls(SequenceTag(key))
        if key.lower() == "excess":
            return cls(SequenceTag.EXCESS)
        head, _, tail = key.partition(":")
        if head.lower() in ("indicator", "omega") and tail:
            return cls(SequenceTag.INDICATOR, int(tail))
        raise ValueError(f"Unknown exponent sequence: {name}")

    @property
    def label(self) -> str:
        if self.tag == SequenceTag.INDICATOR:
            return f"indicator:{self.k}"
        return self.tag.value

    def coefficient(self, j: int) -> int:
        if j < 2:
            return 0
        if self.tag == SequenceTag.S:
            return 1
        if self.tag == SequenceTag.E:
            return 1 if j % 2 == 0 else 0
        if self.tag == SequenceTag.O:
            return 1 if j % 2 == 1 else 0
        if self.tag == SequenceTag.INDICATOR:
            return 1 if j == self.k else 0
        return j - 1

    def local_mass_coefficients(self, r_max: int) -> Dict[int, int]:
        """
        Integer c_r with sum_j a_j (p^-j - p^-(j+1)) = sum_r c_r p^-r, r <= r_max.
        The left side is the density of integers whose p-part contributes 1.
        """
        if self.tag == SequenceTag.EXCESS:
            raise ValueError("EXCESS is not a 0/1 sequence")
        coeffs = {}
        for r in range(2, r_max + 1):
            c = self.coefficient(r) - self.coefficient(r - 1)
            if c:
                coeffs[r] = c
        return coeffs


@lru_cache(maxsize=1)
def _small_primes() -> Tuple[int, ...]:
    return tuple(cached_primes(TRIAL_DIVISION_LIMIT).tolist())


def _split(m: int) -> List[int]:
    """Prime factors of m (with multiplicity), m free of primes < 2^16."""
    if m == 1:
        return []
    if is_prime(m):
        return [m]
    d = pollard_brent(m)
    return _split(d) + _split(m // d)


def factorize(n: int) -> PrimeSignature:
    """
    Unique prime factorization of 1 <= n <= 2^63 - 1.

    Trial division by the primes below 2^16 handles almost every input; a
    leftover cofactor is certified prime by Miller-Rabin or split by rho.
    """
    if n < 1:
        raise ValueError(f"factorize needs n >= 1, got {n}")
    if n > WORD_LIMIT:
        raise ValueError(f"{n} exceeds the word-size limit {WORD_LIMIT}")

    factors: Dict[int, int] = {}
    rem = n
    for p in _small_primes():
        if p * p > rem:
            break
        if rem % p == 0:
            e = 0
            while rem % p == 0:
                rem //= p
                e += 1
            factors[p] = e

    if rem > 1:
        for q in _split(rem):
            factors[q] = factors.get(q, 0) + 1

    return PrimeSignature(n, tuple(sorted(factors.items())))


def exponent_summary(sig: PrimeSignature, ks: Iterable[int] = ()) -> ExponentSummary:
    """M(n), m(n) and omega_k(n); n = 1 gets M = m = 1 by convention"""
    exps = sig.exponents
    omega_counts = {k: sum(1 for e in exps if e == k) for k in sorted(set(ks))}
    if not exps:
        return ExponentSummary(sig.n, 1, 1, omega_counts)
    return ExponentSummary(sig.n, max(exps), min(exps), omega_counts)


def omega_A(sig: PrimeSignature, seq: ExponentSequence) -> int:
    """sum_{j >= 2} a_j omega_j(n)"""
    return sum(seq.coefficient(e) for e in sig.exponents)


def big_omega(sig: PrimeSignature) -> int:
    return sum(sig.exponents)


def small_omega(sig: PrimeSignature) -> int:
    return len(sig.factors)


def summarize(n: int, ks: Iterable[int] = (), sequences: Iterable[ExponentSequence] = ()) -> ExponentSummary:
    """Oracle summary of n, including omega_A for the given sequences."""
    sig = factorize(n)
    base = exponent_summary(sig, ks)
    omega_a = {seq.label: omega_A(sig, seq) for seq in sequences}
    return ExponentSummary(base.n, base.max_exp, base.min_exp, base.omega_counts, omega_a)
