import io
import math
from fractions import Fraction

import numpy as np
import pytest

from src.egs.certify import read_certificate, verify_dual, verify_subfactorization, write_certificate
from src.egs.errors import DomainError, ResourceLimitError
from src.egs.greedy import search_t
from src.egs.linprog import (
    ColumnPolicy,
    IPEngine,
    SplitReport,
    brute_force_M,
    build_model,
    exact_simplex,
    export_model,
    floor_residuals_lower,
    import_model,
    ip_exact,
    lp_upper,
    minimal_columns,
    smooth_lower,
    split_consistency,
    t_exact,
)
from src.egs.ntheory import sieve_primes


def test_minimal_columns_j45():
    cols = minimal_columns(5, 4, sieve_primes(5))
    assert [j for j, _ in cols] == [4, 5, 6, 9]
    model = build_model(5, 4, ColumnPolicy.J)
    assert model.columns.tolist() == [4, 5, 6, 9]
    assert model.primes.tolist() == [2, 3, 5]
    assert model.entries()[(3, 9)] == 2


def test_interval_and_smooth_policies():
    assert build_model(9, 3).columns.tolist() == list(range(3, 10))
    smooth = build_model(10**4, 3000, ColumnPolicy.smooth)
    assert smooth.shape[0] == 25
    assert all(j >= 3000 for j in smooth.columns.tolist())
    with pytest.raises(DomainError):
        build_model(9, 10)


def test_export_import_preserves_model():
    model = build_model(30, 10, ColumnPolicy.J)
    buffer = io.StringIO()
    text = export_model(model, buffer, integer=True)
    assert buffer.getvalue() == text
    assert import_model(text).same_as(model)


def test_exact_simplex_small_program():
    result = exact_simplex([[1, 2], [3, 1]], [4, 6], [1, 1])
    assert result.objective == Fraction(14, 5)
    assert result.x == [Fraction(8, 5), Fraction(6, 5)]
    assert result.y == [Fraction(2, 5), Fraction(1, 5)]


def test_lp_upper_ten_five():
    solution = lp_upper(10, 5)
    assert solution.upper_bound == 8
    assert solution.dual_report.accepted
    assert solution.objective >= Fraction(25, 3)
    assert verify_dual(solution.dual_certificate()).proves_t_bound


def test_lp_upper_nine_three_is_feasible():
    solution = lp_upper(9, 3)
    assert solution.objective >= 9


def test_floor_residuals_nine_three():
    cert = floor_residuals_lower(9, 3)
    assert verify_subfactorization(cert).accepted


def test_weak_duality():
    N, t = 60, 20
    lower = verify_subfactorization(floor_residuals_lower(N, t)).count
    upper = lp_upper(N, t).upper_bound
    assert upper is not None and lower <= upper


def test_smooth_lower_is_valid():
    cert = smooth_lower(1000, 300)
    report = verify_subfactorization(cert)
    assert report.bound_implied
    assert report.min_factor >= 300
    with pytest.raises(DomainError):
        smooth_lower(50, 10)


@pytest.mark.parametrize("N", range(4, 13))
def test_ip_matches_brute_force(N):
    for t in range(2, N + 1):
        result = ip_exact(N, t)
        assert result.exact
        assert result.value == brute_force_M(N, t), (N, t)


def test_bnb_engine_agrees_with_milp():
    assert ip_exact(40, 14, engine=IPEngine.bnb).value == ip_exact(40, 14).value


def test_ip_limits():
    with pytest.raises(DomainError):
        ip_exact(10, 1)
    with pytest.raises(ResourceLimitError):
        ip_exact(10**5, 3 * 10**4)
    with pytest.raises(DomainError):
        brute_force_M(13, 4)


def test_t_exact_nine():
    record = t_exact(9)
    assert record.exact
    assert record.lower == 3


@pytest.mark.slow
def test_t_exact_155():
    record = t_exact(155)
    assert (record.lower, record.upper) == (45, 45)
    assert lp_upper(155, 46).upper_bound >= 155


@pytest.mark.slow
def test_split_example_self_consistent():
    report = split_consistency()
    assert (report.N, report.t) == (3 * 10**5, 10**5)
    assert float(report.lp_objective) == pytest.approx(3 * 10**5 + 445.83398, abs=1e-4)
    assert report.upper == 3 * 10**5 + 445
    assert report.consistent
    assert report.matching_offsets() == [445]


def test_split_report_offsets():
    report = SplitReport(N=1000, t=300, lp_objective=Fraction(2891, 2), upper=1445, lower=1440)
    assert not report.consistent
    assert report.matching_offsets() == [445]
    assert SplitReport(1000, 300, Fraction(0), None, 1440).matching_offsets() == []


def _lp_refutes(N, t):
    bound = lp_upper(N, t).upper_bound
    return bound is not None and bound < N


@pytest.mark.slow
@pytest.mark.parametrize("N", [100, 200, 600])
def test_lp_and_floor_residuals_pin_t(N):
    t = search_t(N)[0]
    while not _lp_refutes(N, t + 1):
        t += 1
    assert verify_subfactorization(floor_residuals_lower(N, t)).accepted


@pytest.mark.slow
def test_bracket_at_155_needs_integer_programming():
    assert verify_subfactorization(floor_residuals_lower(155, 45)).accepted
    assert not _lp_refutes(155, 46)
    assert _lp_refutes(155, 47)
    assert ip_exact(155, 46).upper < 155


@pytest.mark.slow
def test_weak_duality_on_random_pairs():
    rng = np.random.default_rng(20240611)
    for _ in range(200):
        N = int(rng.integers(10, 501))
        t = int(rng.integers(2, N // 2 + 1))
        lower = verify_subfactorization(floor_residuals_lower(N, t)).count
        upper = lp_upper(N, t).upper_bound
        assert upper is not None and lower <= upper, (N, t)


@pytest.mark.slow
def test_dual_certificate_refutes_a_third_at_43631(tmp_path):
    solution = lp_upper(43631, 14544)
    path = tmp_path / "t43631.dual"
    write_certificate(solution.dual_certificate(), str(path))
    report = verify_dual(read_certificate(str(path)))
    assert report.accepted
    assert report.proves_t_bound
    assert 43630 < Fraction(report.value) < 43631
    assert report.bound_implied.endswith("t(43631) < 14544")


@pytest.mark.slow
def test_greedy_search_is_exact_up_to_79():
    for N in range(1, 80):
        record = t_exact(N)
        assert record.exact, N
        assert search_t(N)[0] == record.lower, N
        if N != 56:
            assert record.lower >= 2 * N // 7, N
        assert record.lower ** N <= math.factorial(N), N
    assert t_exact(56).lower == 15
