import math

import mpmath
import pytest

from src.core.constants import (
    ConstantEstimate,
    ToleranceUnreachableError,
    compute_B1,
    compute_B2,
    compute_D1,
    compute_D2,
    compute_e_km,
    compute_varM,
    constants_report,
    e_table,
    gamma0,
    gamma1,
    lambda_mass,
    one_minus_inverse_zeta,
    prime_sum_mean,
    prime_sum_second,
    prime_zeta,
    smallest_truncation,
    zeta,
    zeta_minus_one,
)
from src.core.distribution import benford_f, zeta_f
from src.core.exponents import ExponentSequence, SequenceTag

mpmath.mp.dps = 30


def _close(estimate: ConstantEstimate, reference, slack: float = 0.0) -> bool:
    return abs(estimate.value - float(reference)) <= estimate.abs_error_bound + slack


# --------------------------------------------------------------------------
# ConstantEstimate arithmetic
# --------------------------------------------------------------------------

def test_estimate_arithmetic_propagates_bounds():
    a = ConstantEstimate(2.0, 1e-10, "series")
    b = ConstantEstimate(3.0, 2e-10, "series")
    total = a + b
    assert total.value == 5.0
    assert total.abs_error_bound >= 3e-10
    assert total.method == "series"
    product = a * b
    assert product.abs_error_bound >= 3.0 * 1e-10 + 2.0 * 2e-10
    assert (a - ConstantEstimate(2.0, 0.0, "other")).method == "derived"
    assert (1 / a).contains(0.5)


def test_estimate_rejects_negative_bound():
    with pytest.raises(ValueError):
        ConstantEstimate(1.0, -1.0, "x")
    with pytest.raises(ZeroDivisionError):
        ConstantEstimate(1.0, 0.0, "x") / ConstantEstimate(0.0, 1e-3, "x")


# --------------------------------------------------------------------------
# zeta family
# --------------------------------------------------------------------------

@pytest.mark.parametrize("s", [1.5, 2.0, 3.0, 4.5, 10.0, 40.0])
def test_zeta_series_against_mpmath(s):
    z = zeta(s)
    assert z.method == "series"
    assert z.abs_error_bound < 1e-13
    assert _close(z, mpmath.zeta(s))


def test_zeta_two_is_pi_squared_over_six():
    assert abs(zeta(2.0).value - math.pi ** 2 / 6) <= zeta(2.0).abs_error_bound


@pytest.mark.parametrize("s", [0.25, 0.5, 2 / 3, 0.75, 0.9])
def test_zeta_continuation_against_mpmath(s):
    z = zeta(s)
    assert z.method == "eta_continuation"
    assert z.value < 0
    assert _close(z, mpmath.zeta(s))


def test_zeta_domain():
    with pytest.raises(ValueError):
        zeta(1.0)
    with pytest.raises(ValueError):
        zeta(-0.5)


def test_zeta_minus_one_keeps_relative_accuracy():
    z = zeta_minus_one(50.0)
    reference = float(mpmath.zeta(50) - 1)
    assert abs(z.value - reference) / reference < 1e-12


@pytest.mark.parametrize("s", [2.0, 3.0, 4.0, 7.5])
def test_prime_zeta_against_mpmath(s):
    pz = prime_zeta(s)
    assert pz.abs_error_bound < 1e-13
    assert _close(pz, mpmath.primezeta(s))


def test_one_minus_inverse_zeta():
    assert _close(one_minus_inverse_zeta(2), 1 - 6 / mpmath.pi ** 2)


# --------------------------------------------------------------------------
# B constants
# --------------------------------------------------------------------------

def test_b_constants_print_to_nine_places():
    assert f"{compute_B1(1e-9).value:.9f}" == "1.705211140"
    assert f"{compute_B2(1e-9).value:.9f}" == "4.301302400"
    assert f"{compute_varM(1e-9).value:.9f}" == "1.393557368"


def test_b_constants_against_mpmath_series():
    b1 = 1 + mpmath.nsum(lambda k: 1 - 1 / mpmath.zeta(k), [2, mpmath.inf])
    b2 = 1 + mpmath.nsum(lambda k: (2 * k - 1) * (1 - 1 / mpmath.zeta(k)), [2, mpmath.inf])
    assert _close(compute_B1(), b1, 1e-14)
    assert _close(compute_B2(), b2, 1e-14)
    assert compute_B1().abs_error_bound <= 1e-12


@pytest.mark.parametrize("compute", [compute_B1, compute_B2, compute_varM])
def test_refining_tolerance_stays_inside_first_bound(compute):
    for tol in (1e-4, 1e-6, 1e-8):
        first, refined = compute(tol), compute(tol / 10)
        assert first.abs_error_bound <= tol
        assert refined.abs_error_bound <= first.abs_error_bound
        assert abs(refined.value - first.value) <= first.abs_error_bound


def test_refined_gamma_stays_inside_first_bound():
    first, refined = gamma0(3, tol=1e-7), gamma0(3, tol=1e-8)
    assert refined.abs_error_bound <= first.abs_error_bound
    assert abs(refined.value - first.value) <= first.abs_error_bound


# --------------------------------------------------------------------------
# gamma constants
# --------------------------------------------------------------------------

def test_gamma0_two_closed_form():
    g = gamma0(2)
    assert _close(g, mpmath.zeta(1.5) / mpmath.zeta(3))


def test_gamma1_two_closed_form_is_negative():
    g = gamma1(2)
    assert g.value < 0
    assert _close(g, mpmath.zeta(mpmath.mpf(2) / 3) / mpmath.zeta(2))


def test_gamma_euler_product_reproduces_closed_forms():
    assert gamma0(2, method="euler_product").agrees_with(gamma0(2, method="closed_form"))
    assert gamma1(2, method="euler_product").agrees_with(gamma1(2, method="closed_form"))


def test_gamma0_three_against_direct_product():
    # cube-full leading constant, about 4.6592661
    g = gamma0(3)
    assert g.abs_error_bound <= 1e-12
    assert abs(g.value - 4.6592661) < 1e-6


def test_gamma_rejects_small_k():
    with pytest.raises(ValueError):
        gamma0(1)
    with pytest.raises(ValueError):
        gamma0(3, method="closed_form")


def test_gamma_tolerance_unreachable_with_fixed_prime_limit():
    g = gamma0(4, tol=1e-15, prime_limit=2 ** 10)
    assert g.abs_error_bound > 1e-15


# --------------------------------------------------------------------------
# D constants
# --------------------------------------------------------------------------

def test_d_sums_of_f1_match_b_constants():
    f = zeta_f()
    assert compute_D1(f, 1e-12).agrees_with(compute_B1() - 1)
    assert compute_D2(f, 1e-10).agrees_with(compute_B2() - 1)


def test_d_sum_of_finite_support_is_exact_sum():
    f = benford_f(10)
    expected = math.fsum(1 - math.log(k) / math.log(10) for k in range(2, 10))
    d1 = compute_D1(f)
    assert d1.method == "finite_sum"
    assert abs(d1.value - expected) <= 1e-14


def test_d_sum_unreachable_tolerance():
    with pytest.raises(ToleranceUnreachableError):
        compute_D1(zeta_f(), tol=1e-30)


def test_smallest_truncation():
    assert smallest_truncation(lambda k: 2.0 ** -k, 1e-3, 2 ** 10) == 10
    assert smallest_truncation(lambda k: 0.0, 1.0, 8) == 1
    with pytest.raises(ToleranceUnreachableError):
        smallest_truncation(lambda k: 1.0 / k, 1e-9, 2 ** 10)


# --------------------------------------------------------------------------
# e_{k,m} and prime sums
# --------------------------------------------------------------------------

def test_e_table_sums_to_one():
    table = e_table(ExponentSequence(SequenceTag.INDICATOR, 2), 12)
    total = math.fsum(e.value for e in table)
    assert abs(total - 1) <= table[0].abs_error_bound + 1e-12
    assert all(e.value >= 0 for e in table)


def test_e_mean_equals_prime_sum():
    seq = ExponentSequence(SequenceTag.INDICATOR, 2)
    table = e_table(seq, 12)
    mean = math.fsum(m * e.value for m, e in enumerate(table))
    target = prime_sum_mean(2)
    assert abs(mean - target.value) <= 1e-10
    assert lambda_mass(seq).agrees_with(target)


def test_e_k_m_enumeration_agrees_with_euler_product():
    product = compute_e_km(2, 1)
    enumerated = compute_e_km(2, 1, tol=1e-3, method="enumeration")
    assert enumerated.agrees_with(product)


def test_e_zero_for_sequence_s_is_squarefree_density():
    # omega_S(n) = 0 exactly when n is squarefree
    e0 = compute_e_km(2, 0, seq=ExponentSequence(SequenceTag.S))
    assert _close(e0, 6 / mpmath.pi ** 2, 1e-15)


def test_e_k_m_rejects_bad_arguments():
    with pytest.raises(ValueError):
        compute_e_km(2, -1)
    with pytest.raises(ValueError):
        compute_e_km(2, 0, method="guess")


@pytest.mark.parametrize("k", [2, 3])
def test_prime_sums_direct_agree_with_prime_zeta(k):
    closed = prime_sum_mean(k)
    direct = prime_sum_mean(k, method="direct", prime_limit=10 ** 6)
    assert direct.agrees_with(closed)
    reference = mpmath.primezeta(k) - mpmath.primezeta(k + 1)
    assert _close(closed, reference, 1e-15)
    second = prime_sum_second(k)
    assert second.agrees_with(prime_sum_second(k, method="direct", prime_limit=10 ** 6))


def test_constants_report_keys():
    report = constants_report(1e-9, ks=range(2, 4), e_grid={2: 2})
    for key in ("B1", "B2", "varM", "gamma0_2", "gamma1_3", "e_2_0", "e_2_2"):
        assert set(report[key]) == {"value", "error_bound", "method"}
