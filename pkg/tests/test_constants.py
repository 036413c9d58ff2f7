from fractions import Fraction

import pytest

from src.egs.constants import (
    c0_quadrature,
    compute_c0,
    compute_c1_double_prime,
    compute_c1_suite,
    reference_values,
    series_sum,
)
from src.egs.errors import DomainError
from src.egs.interval import RationalInterval
from src.utils.constants import (
    C0_REFERENCE,
    C1_DOUBLE_PRIME_REFERENCE,
    C1_PRIME_ALT,
    C1_REFERENCE,
)


@pytest.fixture(scope="module")
def c0():
    return compute_c0(Fraction(1, 10**5), threads=1)


def test_c0_enclosure_is_tight(c0):
    assert c0.width <= Fraction(1, 10**5)
    assert abs(float(c0.value.mid) - 0.30441901) < 1e-5


def test_c0_agrees_with_reference_digits(c0):
    assert c0.matches() == {"reference": True}
    assert c0.digits.startswith("0.304")


def test_c0_json(c0):
    data = c0.to_json()
    assert data["name"] == "c0"
    assert set(data["components"]) == {"series", "closed", "fractional_integral"}
    assert data["matches"]["reference"]


def test_c0_quadrature_oracle(c0):
    assert c0_quadrature(cutoff=1000, steps_per_unit=1000) == pytest.approx(float(c0.value.mid), abs=2e-3)


def test_tolerance_floor():
    with pytest.raises(DomainError):
        compute_c0(Fraction(1, 10**11))


def test_series_sum_is_exact_for_rationals():
    exact = sum(Fraction(1, k * k) for k in range(1, 101))
    enclosure = series_sum("inv_sq", 100, threads=1)
    assert enclosure.contains(exact)
    assert enclosure.width < Fraction(1, 10**30)


def test_reference_values():
    assert reference_values() == (C0_REFERENCE, C1_REFERENCE)


@pytest.mark.slow
def test_c1_suite_without_acceleration():
    tol = Fraction(1, 10**4)
    c1p, c1pp, c1 = compute_c1_suite(tol, accelerate=False, threads=2)
    slack = Fraction(1, 10**7)
    assert c1.width <= tol
    assert c1.value.lo - slack <= C1_REFERENCE <= c1.value.hi + slack
    assert abs(float(c1p.value.mid) - 0.37020) < 1e-4
    assert abs(float(c1pp.value.mid) - 1.67958) < 1e-3


def test_c1_suite_respects_tolerance():
    tol = Fraction(1, 10**3)
    c1p, c1pp, c1 = compute_c1_suite(tol, accelerate=False, threads=1)
    assert c1.width <= tol
    assert c1.components["c0"].width <= tol / 8
    assert abs(float(c1.value.mid) - 0.75554808) < 1e-3


def _near(enclosure, ref, slack):
    return enclosure.value.intersects(RationalInterval(ref - slack, ref + slack))


@pytest.fixture(scope="module")
def suite_1e8():
    return compute_c1_suite(Fraction(1, 10**8), threads=2)


@pytest.mark.slow
def test_c0_at_1e8():
    c0 = compute_c0(Fraction(1, 10**8), threads=2)
    assert c0.width <= Fraction(1, 10**8)
    assert c0.matches() == {"reference": True}
    assert _near(c0, C0_REFERENCE, Fraction(1, 10**8))


@pytest.mark.slow
def test_c1_prime_settles_the_seventh_digit(suite_1e8):
    c1p, _, _ = suite_1e8
    assert c1p.value.intersects(RationalInterval(Fraction(37020516, 10**8), Fraction(37020517, 10**8)))
    # 0.3702051 is right; 0.3702015 transposes two digits
    assert c1p.matches() == {"primary": False, "alternate": True}
    assert _near(c1p, C1_PRIME_ALT, Fraction(1, 10**7))


@pytest.mark.slow
def test_c1_double_prime_and_c1_at_1e8(suite_1e8):
    _, c1pp, c1 = suite_1e8
    assert _near(c1pp, C1_DOUBLE_PRIME_REFERENCE, Fraction(1, 10**9))
    assert c1.width <= Fraction(1, 10**8)
    assert _near(c1, C1_REFERENCE, Fraction(1, 10**8))
    assert c1.matches()["alternate"] is False


@pytest.mark.slow
def test_accelerated_tail_narrows_the_crude_one():
    K = 10**4
    crude = compute_c1_double_prime(K, accelerate=False, threads=2)
    fast = compute_c1_double_prime(K, 10**4, accelerate=True, threads=2)
    assert crude.value.intersects(fast.value)
    assert fast.width < crude.width / 10
