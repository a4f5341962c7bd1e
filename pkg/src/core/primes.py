"""
PrimExp - Prime Utilities
Base prime sieve, integer roots, and the primality / splitting helpers used by
the factorization oracle.
"""

import math
import random
from functools import lru_cache
from typing import Optional

import numpy as np

# Deterministic Miller-Rabin witnesses for every n < 3.3e24
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)


def primes_up_to(limit: int) -> np.ndarray:
    """
    Sieve of Eratosthenes over odd numbers only.

    Returns:
        int64 array of all primes <= limit (empty for limit < 2)
    """
    if limit < 2:
        return np.array([], dtype=np.int64)
    if limit < 3:
        return np.array([2], dtype=np.int64)

    # index i stands for the odd number 2*i + 1
    size = (limit - 1) // 2 + 1
    is_odd_prime = np.ones(size, dtype=bool)
    is_odd_prime[0] = False
    for i in range(1, (math.isqrt(limit) - 1) // 2 + 1):
        if is_odd_prime[i]:
            p = 2 * i + 1
            is_odd_prime[(p * p) // 2::p] = False

    odd = 2 * np.flatnonzero(is_odd_prime).astype(np.int64) + 1
    return np.concatenate((np.array([2], dtype=np.int64), odd))


@lru_cache(maxsize=8)
def cached_primes(limit: int) -> np.ndarray:
    """Memoized primes_up_to for the handful of limits reused across calls."""
    primes = primes_up_to(limit)
    primes.setflags(write=False)
    return primes


def iroot(n: int, k: int) -> int:
    """Greatest integer r with r**k <= n."""
    if n < 0:
        raise ValueError(f"iroot needs n >= 0, got {n}")
    if n < 2 or k == 1:
        return n
    r = int(round(n ** (1.0 / k)))
    # float guess can be off by one either way
    while r ** k > n:
        r -= 1
    while (r + 1) ** k <= n:
        r += 1
    return r


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for n < 3.3e24."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p

    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1

    for a in _MR_BASES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def pollard_brent(n: int, seed: Optional[int] = None) -> int:
    """
    Find a nontrivial factor of an odd composite n (Brent's variant of rho).
    The seed only changes the search path, never the result of factorize().
    """
    if n % 2 == 0:
        return 2
    rng = random.Random(seed if seed is not None else n)
    while True:
        y, c, m = rng.randrange(1, n), rng.randrange(1, n), rng.randrange(1, n)
        g, r, q = 1, 1, 1
        x = ys = y
        while g == 1:
            x = y
            for _ in range(r):
                y = (y * y + c) % n
            k = 0
            while k < r and g == 1:
                ys = y
                for _ in range(min(m, r - k)):
                    y = (y * y + c) % n
                    q = q * abs(x - y) % n
                g = math.gcd(q, n)
                k += m
            r *= 2
        if g == n:
            g = 1
            while g == 1:
                ys = (ys * ys + c) % n
                g = math.gcd(abs(x - ys), n)
        if g != n:
            return g
