import math

import mpmath
import pytest

from src.core.constants import compute_B1, compute_B2, e_table, prime_sum_mean
from src.core.distribution import (
    E_TABLE_SIZE,
    ArithmeticF,
    ArithmeticFDistribution,
    TailBound,
    ToleranceUnreachableError,
    UnknownBuiltinError,
    builtin,
    builtin_distribution,
    cdf,
    ks_statistic,
    mean_closed,
    mean_direct,
    parse_builtin,
    pmf,
    pmf_table,
    sample,
    second_moment_closed,
    second_moment_direct,
    validate,
    variance,
)
from src.core.exponents import ExponentSequence, SequenceTag

BENFORD_MEAN = 9 - math.log10(math.factorial(9))


@pytest.fixture(scope="module")
def f1():
    return builtin_distribution("f1")


def test_f1_pmf_values(f1):
    assert pmf(f1, 0) == 0.0
    assert pmf(f1, 1) == pytest.approx(6 / math.pi ** 2, abs=1e-14)
    assert f"{pmf(f1, 1):.9f}" == "0.607927102"
    for k in range(2, 8):
        expected = 1 / mpmath.zeta(k + 1) - 1 / mpmath.zeta(k)
        assert pmf(f1, k) == pytest.approx(float(expected), abs=1e-14)


def test_f1_cdf_is_f_of_k_plus_one(f1):
    assert cdf(f1, 0) == 0.0
    assert cdf(f1, 2) == pytest.approx(float(1 / mpmath.zeta(3)), abs=1e-14)
    total = math.fsum(pmf(f1, k) for k in range(80))
    assert total == pytest.approx(1.0, abs=1e-14)


def test_complement_keeps_precision_in_the_tail(f1):
    with mpmath.workdps(40):
        expected = float((mpmath.zeta(40) - 1) / mpmath.zeta(40))
    assert f1.f.complement(40) == pytest.approx(expected, rel=1e-9)

    plain = ArithmeticF("plain", lambda n: 0.25 * min(n, 4))
    assert plain.complement(1) == 0.75
    with pytest.raises(ValueError):
        plain.complement(-1)


def test_f1_moments_are_the_b_constants(f1):
    assert abs(mean_closed(f1).value - compute_B1().value) <= 1e-8
    assert abs(second_moment_closed(f1).value - compute_B2().value) <= 1e-8
    assert mean_direct(f1).agrees_with(mean_closed(f1))
    assert second_moment_direct(f1).agrees_with(second_moment_closed(f1))


def test_benford_mean_closed_and_direct():
    dist = builtin_distribution("f0:10")
    closed = mean_closed(dist)
    direct = mean_direct(dist)
    assert abs(closed.value - BENFORD_MEAN) <= 1e-12
    assert abs(direct.value - BENFORD_MEAN) <= 1e-12
    assert f"{BENFORD_MEAN:.6f}" == "3.440237"
    # support is 1..9
    assert pmf(dist, 0) == 0.0
    assert pmf(dist, 10) == 0.0
    assert pmf(dist, 1) == pytest.approx(math.log10(2), abs=1e-15)


def test_degenerate_point_mass():
    dist = builtin_distribution("degenerate")
    assert pmf(dist, 1) == 1.0
    assert mean_closed(dist).value == 1.0
    assert variance(dist).value == 0.0
    assert set(sample(dist, 3, 50)) == {1}


def test_omega_law_mean_is_prime_sum():
    dist = builtin_distribution("f2k:2")
    assert mean_closed(dist).agrees_with(prime_sum_mean(2))
    assert mean_direct(dist).agrees_with(mean_closed(dist))


@pytest.mark.parametrize("k", [2, 3])
def test_omega_law_increments_are_e_constants(k):
    f = builtin(f"f2k:{k}")
    table = e_table(ExponentSequence(SequenceTag.INDICATOR, k), E_TABLE_SIZE)
    for n, e in enumerate(table[:9]):
        assert f(n + 1) - f(n) == pytest.approx(e.value, abs=1e-12)


def test_sampling_is_deterministic_per_seed(f1):
    first = sample(f1, 7, 2_000)
    assert first == sample(f1, 7, 2_000)
    assert first != sample(f1, 8, 2_000)
    assert min(first) >= 1
    assert sample(f1, 7, 0) == []


def test_sample_matches_law(f1):
    n = 20_000
    draws = sample(f1, 0, n)
    assert ks_statistic(draws, f1) < 2.5 / math.sqrt(n)
    assert abs(sum(draws) / n - compute_B1().value) < 0.05


@pytest.mark.parametrize("name", ["f1", "f0:10", "f2k:2", "f2k:3", "fA:S", "fA:E", "fA:O", "degenerate"])
def test_builtins_validate(name):
    report = validate(builtin(name))
    assert report.passed, report.violations
    assert report.to_dict()["pass"] is True


def test_validate_reports_non_monotone_f():
    values = [0.0, 0.5, 0.3, 1.0]
    bad = ArithmeticF("bumpy", lambda n: values[min(n, 3)])
    report = validate(bad, n_max=8)
    assert not report.passed
    assert [v["name"] for v in report.violations] == ["monotone"]
    assert not report.certified


def test_non_certified_moments_refused():
    dist = ArithmeticFDistribution(ArithmeticF("plain", lambda n: 1.0 if n >= 3 else 0.0))
    with pytest.raises(ToleranceUnreachableError):
        mean_closed(dist)
    with pytest.raises(ToleranceUnreachableError):
        mean_direct(dist)


def test_direct_moment_with_too_small_k(f1):
    with pytest.raises(ToleranceUnreachableError):
        mean_direct(f1, K=5, tol=1e-9)


def test_parse_builtin():
    assert parse_builtin("f0(10)") == ("f0", 10)
    assert parse_builtin("f0:10") == ("f0", 10)
    assert parse_builtin("f2k:3") == ("f2k", 3)
    assert parse_builtin("fA:E") == ("fA:E", None)
    assert parse_builtin("f1") == ("f1", None)
    for name in ("f7", "fA:Q", "f0", "f0:ten"):
        with pytest.raises(UnknownBuiltinError):
            parse_builtin(name)
    with pytest.raises(ValueError):
        parse_builtin("f0:1")
    with pytest.raises(ValueError):
        parse_builtin("f2k:1")


def test_pmf_table_columns(f1):
    table = pmf_table(f1, 5)
    assert list(table.columns) == ["k", "pmf", "cdf"]
    assert table["k"].tolist() == [0, 1, 2, 3, 4, 5]
    assert table["cdf"].iloc[-1] == pytest.approx(math.fsum(table["pmf"]), abs=1e-14)


def test_tail_bound_shapes():
    assert TailBound.finite(4).value(3) == 1.0
    assert TailBound.finite(4).value(4) == 0.0
    geometric = TailBound.geometric(2.0, 0.5)
    assert geometric.value(3) == pytest.approx(0.25)
    assert geometric.sum_from(3) == pytest.approx(0.5)
    assert TailBound.factorial(1.0).value(3) == pytest.approx(1 / 6)
    with pytest.raises(ValueError):
        TailBound.geometric(1.0, 1.0)


@pytest.mark.slow
def test_frequency_of_one_in_a_million_draws(f1):
    draws = sample(f1, 0, 10 ** 6)
    frequency = draws.count(1) / len(draws)
    assert abs(frequency - 6 / math.pi ** 2) <= 0.002
