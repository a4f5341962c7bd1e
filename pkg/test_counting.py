import pytest
import sympy

from src.core.counting import (
    CountKind,
    CountMethod,
    CountReport,
    count_k_free,
    count_k_free_moebius,
    count_k_free_sieve,
    count_k_full,
    enumerate_k_full,
    k_free_count,
    k_full_count,
    moebius_up_to,
)


def _brute_exponents(x):
    return {n: list(sympy.factorint(n).values()) for n in range(2, x + 1)}


def test_small_anchor_values():
    assert count_k_full(100, 2).count == 14
    assert count_k_free_sieve(100, 2).count == 61
    assert count_k_free_moebius(100, 2).count == 61


def test_enumerate_square_full_up_to_100():
    values = sorted(sig.n for sig in enumerate_k_full(100, 2))
    assert values == [1, 4, 8, 9, 16, 25, 27, 32, 36, 49, 64, 72, 81, 100]
    assert all(min(e for _, e in sig.factors) >= 2 for sig in enumerate_k_full(100, 2) if sig.n > 1)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_counts_match_brute_force(k):
    x = 5_000
    exps = _brute_exponents(x)
    full = 1 + sum(1 for e in exps.values() if min(e) >= k)
    free = 1 + sum(1 for e in exps.values() if max(e) < k)
    assert count_k_full(x, k).count == full
    assert count_k_free_sieve(x, k).count == free
    assert count_k_free_moebius(x, k).count == free


@pytest.mark.parametrize("k", [2, 3, 4, 5])
@pytest.mark.parametrize("x", [1, 2, 12_345, 100_000])
def test_sieve_and_moebius_agree(x, k):
    assert count_k_free_sieve(x, k).count == count_k_free_moebius(x, k).count


@pytest.mark.slow
@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_sieve_and_moebius_agree_at_1e6(k):
    assert count_k_free_sieve(10 ** 6, k).count == count_k_free_moebius(10 ** 6, k).count


def test_sieve_segments_do_not_change_count():
    assert count_k_free_sieve(50_000, 2, segment_length=777).count == count_k_free_sieve(50_000, 2).count


def test_moebius_matches_sympy():
    mu = moebius_up_to(300)
    for n in range(1, 301):
        exps = list(sympy.factorint(n).values())
        expected = 0 if any(e > 1 for e in exps) else (-1) ** len(exps)
        assert mu[n] == expected, n


def test_boundary_conventions():
    assert count_k_full(1, 2).count == 1
    assert count_k_free_sieve(1, 3).count == 1
    assert k_free_count(1000, 1) == 1
    assert k_full_count(1000, 1) == 1000
    assert k_free_count(1000, 2) == count_k_free_sieve(1000, 2).count


def test_invalid_arguments():
    with pytest.raises(ValueError):
        count_k_full(100, 1)
    with pytest.raises(ValueError):
        count_k_free_sieve(0, 2)
    with pytest.raises(ValueError):
        count_k_free(100, 2, method="magic")


def test_report_invariants():
    report = count_k_free(100, 2, "moebius")
    assert report.to_dict() == {"x": 100, "k": 2, "kind": "k_free", "count": 61, "method": "moebius_formula"}
    with pytest.raises(ValueError):
        CountReport(10, 2, CountKind.K_FREE, 11, CountMethod.SIEVE)
    with pytest.raises(ValueError):
        CountReport(10, 2, CountKind.K_FULL, 0, CountMethod.ENUMERATION)


def test_counts_are_monotone_in_x_and_k():
    previous_free = {k: 0 for k in range(2, 5)}
    previous_full = {k: 0 for k in range(2, 5)}
    for x in range(1, 1501):
        for k in range(2, 5):
            free, full = k_free_count(x, k), k_full_count(x, k)
            # each step in x adds at most the one integer x
            assert free - previous_free[k] in (0, 1)
            assert full - previous_full[k] in (0, 1)
            previous_free[k], previous_full[k] = free, full
    for x in (10, 10 ** 3, 10 ** 5, 10 ** 7):
        frees = [k_free_count(x, k) for k in range(1, 8)]
        fulls = [k_full_count(x, k) for k in range(1, 8)]
        assert frees == sorted(frees)
        assert fulls == sorted(fulls, reverse=True)
