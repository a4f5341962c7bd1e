import json
import math

import pytest

from src.core.constants import compute_B1, compute_B2, compute_varM
from src.core.counting import count_k_free_sieve, count_k_full
from src.core.settings import DEFAULT_BASELINE_PATH
from src.core.verify import (
    ROW_COLUMNS,
    ConvergenceRow,
    InsufficientPointsError,
    count_table,
    decade_grid,
    error_exponent_fit,
    geometric_grid,
    identity_checks,
    moment_prediction,
    moment_table,
    rows_frame,
    value_distribution_table,
    variance_table,
)
from src.engines.scan_engine import ScanAccumulator, scan_checkpoints

XS = [10_000, 20_000, 40_000]


@pytest.fixture(scope="module")
def snapshots():
    return scan_checkpoints(XS, ks=(2, 3))


def _synthetic_rows(exponent, xs=(10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6, 10 ** 7), predicted_error=0.0):
    return [ConvergenceRow(x, 0, 0.0, predicted_error, float(x) ** exponent, 1.0, 0.5) for x in xs]


def test_geometric_grid():
    assert geometric_grid(80_000) == [10_000, 20_000, 40_000, 80_000]
    assert geometric_grid(100_000) == [10_000, 20_000, 40_000, 80_000]
    assert geometric_grid(5_000) == [5_000]
    with pytest.raises(ValueError):
        geometric_grid(0)


def test_decade_grid():
    assert decade_grid(10 ** 6) == [10 ** 4, 10 ** 5, 10 ** 6]
    assert decade_grid(9_999) == []


def test_moment_table_rows_are_exact(snapshots):
    rows = moment_table("M", 1, XS, snapshots)
    b1 = compute_B1().value
    for row, x in zip(rows, XS):
        assert row.x == x
        assert isinstance(row.empirical, int)
        assert row.empirical == snapshots[x].sum_max
        assert row.predicted == pytest.approx(b1 * x, rel=1e-15)
        assert row.residual == pytest.approx(row.empirical - b1 * x, abs=1e-6)
        assert row.scaled_residual == pytest.approx(row.residual / math.sqrt(x))
        assert abs(row.scaled_residual) < 3.0


def test_m_moment_prediction_is_dominated_by_x(snapshots):
    rows = moment_table("m", 1, XS, snapshots)
    for row in rows:
        assert abs(row.residual) / row.x < 0.01


def test_unknown_moment_rejected():
    with pytest.raises(ValueError):
        moment_prediction("q", 1)
    with pytest.raises(ValueError):
        moment_prediction("M", 3)


def test_moment_table_needs_increasing_xs(snapshots):
    with pytest.raises(ValueError):
        moment_table("M", 1, [20_000, 10_000], snapshots)
    with pytest.raises(ValueError):
        moment_table("M", 1, [30_000], snapshots)


def test_variance_tables(snapshots):
    rows = variance_table("M", XS, snapshots)
    assert all(row.predicted == pytest.approx(compute_varM().value) for row in rows)
    assert all(abs(row.residual) < 0.1 for row in rows)
    # at small x the k >= 4 full numbers still push (1/x) sum (m - 1)^2 above its
    # main term, so only the shrinking residual and the pinned scaled bound hold
    small = variance_table("m", XS, snapshots)
    residuals = [abs(row.residual) for row in small]
    assert all(r < 0.1 for r in residuals)
    assert residuals == sorted(residuals, reverse=True)
    limit = json.loads(DEFAULT_BASELINE_PATH.read_text(encoding="utf-8"))["varm"]
    assert all(abs(row.scaled_residual) <= limit for row in small)


def test_identity_checks_hold(snapshots):
    for x in XS:
        checks = identity_checks(x, snapshots[x])
        failed = [c for c in checks if not c["pass"]]
        assert not failed, failed


def test_identity_checks_catch_a_wrong_sum(snapshots):
    broken = ScanAccumulator.from_dict(snapshots[10_000].to_dict())
    broken.sum_min += 1
    checks = {c["name"]: c["pass"] for c in identity_checks(10_000, broken)}
    assert checks["sum_m_identity@10000"] is False
    assert checks["sum_M_identity@10000"] is True
    with pytest.raises(ValueError):
        identity_checks(20_000, broken)


def test_value_distribution_of_max_exponent(snapshots):
    rows = value_distribution_table("M", 10_000, 4, snapshots[10_000])
    assert [r.k for r in rows] == [1, 2, 3, 4]
    assert rows[0].count == count_k_free_sieve(10_000, 2).count
    assert all(abs(r.residual) < 0.02 for r in rows)


def test_value_distribution_of_min_exponent(snapshots):
    rows = value_distribution_table("m", 10_000, 3, snapshots[10_000])
    assert rows[0].count == 10_000 - count_k_full(10_000, 2).count + 1
    assert rows[0].limit == 1.0
    assert abs(rows[0].residual) <= 3 / math.sqrt(10_000)


def test_value_distribution_of_omega(snapshots):
    rows = value_distribution_table("omega:2", 10_000, 3, snapshots[10_000])
    assert [r.k for r in rows] == [0, 1, 2, 3]
    assert sum(r.count for r in rows) <= 10_000
    assert all(abs(r.residual) < 0.02 for r in rows)
    for label in ("S", "E", "O"):
        rows = value_distribution_table(f"omegaA:{label}", 10_000, 3, snapshots[10_000])
        assert all(abs(r.residual) < 0.02 for r in rows)


def test_value_distribution_rejects_unknown_stat(snapshots):
    with pytest.raises(ValueError):
        value_distribution_table("omega:5", 10_000, 3, snapshots[10_000])
    with pytest.raises(ValueError):
        value_distribution_table("Q", 10_000, 3, snapshots[10_000])


def test_count_tables():
    full = count_table("k_full", 2, [10_000, 100_000])
    assert [r.empirical for r in full] == [count_k_full(10_000, 2).count, count_k_full(100_000, 2).count]
    assert all(abs(r.scaled_residual) < 10.0 for r in full)
    free = count_table("k_free", 3, [10_000])
    assert free[0].predicted == pytest.approx(10_000 / 1.2020569031595942)
    with pytest.raises(ValueError):
        count_table("k_half", 2, [100])


def test_exponent_fit_recovers_slope():
    fit = error_exponent_fit(_synthetic_rows(0.3), claimed=0.5)
    assert fit.fitted_slope == pytest.approx(0.3, abs=1e-9)
    assert fit.passed
    assert fit.points == 5
    assert fit.to_dict()["pass"] is True


def test_exponent_fit_flags_steep_residuals():
    fit = error_exponent_fit(_synthetic_rows(0.9), claimed=0.5)
    assert not fit.passed


def test_exponent_fit_needs_enough_points():
    with pytest.raises(InsufficientPointsError):
        error_exponent_fit(_synthetic_rows(0.3, xs=(10 ** 3, 10 ** 5, 10 ** 7)), claimed=0.5)
    with pytest.raises(InsufficientPointsError):
        error_exponent_fit(_synthetic_rows(0.3, xs=(1000, 2000, 4000, 8000, 16000)), claimed=0.5)
    # residuals inside the prediction's own error carry no signal
    with pytest.raises(InsufficientPointsError):
        error_exponent_fit(_synthetic_rows(0.3, predicted_error=1e9), claimed=0.5)


def test_rows_frame_columns(snapshots):
    frame = rows_frame(moment_table("M", 2, XS, snapshots))
    assert list(frame.columns) == ROW_COLUMNS
    assert len(frame) == len(XS)


@pytest.fixture(scope="module")
def snapshot_1e7():
    return scan_checkpoints([10 ** 7])[10 ** 7]


@pytest.mark.slow
def test_moments_of_max_exponent_at_1e7(snapshot_1e7):
    x = 10 ** 7
    mean = snapshot_1e7.sum_max / x
    second = snapshot_1e7.sum_max_sq / x
    assert abs(mean - compute_B1().value) <= 5e-3
    assert abs(second - compute_B2().value) <= 2e-2
    assert abs(second - mean ** 2 - 1.393557368) <= 2e-2


@pytest.mark.slow
def test_law_of_max_exponent_at_1e7(snapshot_1e7):
    rows = value_distribution_table("M", 10 ** 7, 4, snapshot_1e7)
    assert rows[0].limit == pytest.approx(0.60792710185, abs=1e-11)
    assert all(abs(r.residual) <= 2e-3 for r in rows)


@pytest.mark.slow
def test_max_exponent_residual_fit_up_to_1e8():
    xs = geometric_grid(10 ** 8)
    rows = moment_table("M", 1, xs, scan_checkpoints(xs))
    fit = error_exponent_fit(rows, claimed=0.5)
    assert fit.points >= 4
    assert fit.fitted_slope <= 0.65
    assert fit.passed
