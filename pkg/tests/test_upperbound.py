import math
from fractions import Fraction

import pytest

from src.egs.errors import DomainError
from src.egs.greedy import search_t
from src.egs.interval import e_enclosure
from src.egs.upperbound import (
    UpperMode,
    asymptotic_reference,
    best_upper,
    bound_curve_rows,
    f_alpha,
    tne_row,
    tne_scan,
    tne_tail_check,
    trivial_upper,
    upper_crit_test,
)


def test_f_alpha_values():
    assert f_alpha(1, Fraction(1, 2)).hi == 0
    assert f_alpha(e_enclosure(), 1).contains(1.0)
    assert f_alpha(3, Fraction(3, 10)).contains(3 * math.log(1.8))
    assert f_alpha(2, 2).hi == 0
    with pytest.raises(DomainError):
        f_alpha(0, Fraction(1, 2))


def test_f_alpha_envelope():
    for k in range(1, 60):
        x = Fraction(k, 37)
        value = f_alpha(2, x)
        assert value.lo >= 0
        assert value.hi <= 2


def test_criterion_small_cases():
    assert not upper_crit_test(9, 4)
    assert upper_crit_test(5000, math.ceil(5000 / math.e))
    with pytest.raises(DomainError):
        upper_crit_test(9, 10)


def test_analytic_mode_agrees_with_sieve():
    N, t = 10**5, 40000
    assert upper_crit_test(N, t, UpperMode.analytic)
    assert upper_crit_test(N, t, UpperMode.exact_sieve)


def test_trivial_upper():
    assert trivial_upper(9) == 5


def test_best_upper_at_regime_start():
    bound = best_upper(80)
    assert bound < 80 / math.e + 1
    assert bound >= search_t(80)[0]
    with pytest.raises(DomainError):
        best_upper(79)


def test_tne_rows():
    assert tne_row(80).passed
    report = tne_scan(80, 200)
    assert report.passed
    assert len(report.rows) == 121
    assert report.rows[0].as_row()["N"] == 80
    assert tne_tail_check(5000).passed
    with pytest.raises(DomainError):
        tne_scan(50, 100)


def test_reference_curves_ordered():
    first, second, third = asymptotic_reference(100)
    assert first > second > third
    assert abs(float(first) - 1 / math.e) < 1e-12


def test_bound_curve_row():
    row = bound_curve_rows([100])[0]
    assert row["lower"] <= row["upper"] < row["trivial"] + 1
    assert row["inv_e"] > row["asym_c0"] > row["asym_c1"]


@pytest.mark.slow
def test_best_upper_1e5():
    assert best_upper(10**5) == 33668
    assert upper_crit_test(10**5, 33669)


@pytest.mark.slow
def test_tne_full_range():
    assert tne_scan(80, 5000).passed


@pytest.mark.slow
def test_best_upper_1e6():
    assert best_upper(10**6) == 342505 + 62
    assert upper_crit_test(10**6, 342568)
