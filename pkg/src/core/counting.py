"""
PrimExp - k-free and k-full Counting
Exact counts S_k(x) of k-free integers and N_k(x) of k-full integers, each by
two independent methods so one can check the other.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Tuple

import numpy as np

from src.core.exponents import PrimeSignature
from src.core.primes import cached_primes, iroot, primes_up_to

logger = logging.getLogger(__name__)

KFREE_SEGMENT_LENGTH = 2 ** 22


class CountKind(Enum):
    K_FREE = "k_free"
    K_FULL = "k_full"


class CountMethod(Enum):
    SIEVE = "sieve"
    MOEBIUS = "moebius_formula"
    ENUMERATION = "enumeration"


@dataclass(frozen=True)
class CountReport:
    x: int
    k: int
    kind: CountKind
    count: int
    method: CountMethod

    def __post_init__(self):
        if self.count > self.x:
            raise ValueError(f"Count {self.count} exceeds x = {self.x}")
        if self.kind == CountKind.K_FULL and self.count < 1:
            raise ValueError("k-full counts include the integer 1")

    def to_dict(self):
        return {
            "x": self.x,
            "k": self.k,
            "kind": self.kind.value,
            "count": self.count,
            "method": self.method.value,
        }


def _check_args(x: int, k: int):
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if x < 1:
        raise ValueError(f"x must be >= 1, got {x}")


def count_k_free_sieve(x: int, k: int, segment_length: int = KFREE_SEGMENT_LENGTH) -> CountReport:
    """
    Mark every multiple of p^k (p <= x^(1/k)) segment by segment and count
    what stays unmarked.
    """
    _check_args(x, k)
    powers = [p ** k for p in primes_up_to(iroot(x, k)).tolist()]
    count = 0
    lo = 1
    while lo <= x:
        hi = min(x, lo + segment_length - 1)
        marked = np.zeros(hi - lo + 1, dtype=bool)
        for q in powers:
            if q > hi:
                break
            first = -(-lo // q) * q
            marked[first - lo::q] = True
        count += int(marked.size - np.count_nonzero(marked))
        lo = hi + 1
    return CountReport(x, k, CountKind.K_FREE, count, CountMethod.SIEVE)


def moebius_up_to(n: int) -> np.ndarray:
    """mu(d) for 0 <= d <= n as int8 (mu(0) set to 0)."""
    mu = np.ones(n + 1, dtype=np.int8)
    mu[0] = 0
    for p in primes_up_to(n).tolist():
        mu[p::p] *= -1
        mu[p * p::p * p] = 0
    return mu


def count_k_free_moebius(x: int, k: int) -> CountReport:
    """S_k(x) = sum_{d <= x^(1/k)} mu(d) floor(x / d^k)"""
    _check_args(x, k)
    root = iroot(x, k)
    mu = moebius_up_to(root)[1:].astype(np.int64)
    d = np.arange(1, root + 1, dtype=np.int64)
    count = int(np.sum(mu * (x // d ** k)))
    return CountReport(x, k, CountKind.K_FREE, count, CountMethod.MOEBIUS)


def enumerate_k_full(x: int, k: int) -> Iterator[PrimeSignature]:
    """
    Every k-full n <= x (1 first) as a PrimeSignature, by depth-first search
    over increasing primes with exponents >= k.
    """
    _check_args(x, k)
    primes = cached_primes(iroot(x, k)).tolist()

    def walk(start: int, product: int, factors: Tuple[Tuple[int, int], ...]):
        yield PrimeSignature(product, factors)
        for i in range(start, len(primes)):
            p = primes[i]
            pe = p ** k
            if product * pe > x:
                break
            e = k
            while product * pe <= x:
                yield from walk(i + 1, product * pe, factors + ((p, e),))
                pe *= p
                e += 1

    yield from walk(0, 1, ())


def count_k_full(x: int, k: int) -> CountReport:
    """N_k(x) by the same DFS as enumerate_k_full, counting without materializing."""
    _check_args(x, k)
    primes = cached_primes(iroot(x, k)).tolist()

    def walk(start: int, product: int) -> int:
        total = 1
        for i in range(start, len(primes)):
            p = primes[i]
            pe = p ** k
            if product * pe > x:
                break
            while product * pe <= x:
                total += walk(i + 1, product * pe)
                pe *= p
        return total

    count = walk(0, 1)
    return CountReport(x, k, CountKind.K_FULL, count, CountMethod.ENUMERATION)


def count_k_free(x: int, k: int, method: str = "sieve") -> CountReport:
    if method == "sieve":
        return count_k_free_sieve(x, k)
    if method in ("moebius", "moebius_formula"):
        return count_k_free_moebius(x, k)
    raise ValueError(f"Unknown k-free method: {method}")


def k_free_count(x: int, k: int) -> int:
    """S_k(x) with the convention S_1(x) = 1."""
    if k == 1:
        return 1
    return count_k_free_moebius(x, k).count


def k_full_count(x: int, k: int) -> int:
    """N_k(x) with the convention N_1(x) = floor(x)."""
    if k == 1:
        return x
    return count_k_full(x, k).count
