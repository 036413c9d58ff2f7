import math
from fractions import Fraction

import pytest

from src.egs.errors import DomainError
from src.egs.interval import (
    RationalInterval,
    ceil_interval,
    e_enclosure,
    floor_interval,
    fraction_str,
    log_enclosure,
    pi_enclosure,
    sqrt_enclosure,
    to_fraction,
)


def test_arithmetic_is_exact():
    a = RationalInterval(Fraction(1, 3), Fraction(1, 2))
    b = RationalInterval(-1, 2)
    assert a + b == RationalInterval(Fraction(-2, 3), Fraction(5, 2))
    assert a * b == RationalInterval(Fraction(-1, 2), 1)
    assert 1 - a == RationalInterval(Fraction(1, 2), Fraction(2, 3))
    assert Fraction(1, 6) / a == RationalInterval(Fraction(1, 3), Fraction(1, 2))


def test_division_by_interval_containing_zero():
    with pytest.raises(DomainError):
        RationalInterval.point(1) / RationalInterval(-1, 1)


def test_endpoints_out_of_order():
    with pytest.raises(DomainError):
        RationalInterval(2, 1)


def test_transcendental_enclosures_contain_floats():
    assert log_enclosure(10).contains(math.log(10))
    assert pi_enclosure().contains(math.pi)
    assert e_enclosure().contains(math.e)
    assert sqrt_enclosure(2).contains(math.sqrt(2))
    assert log_enclosure(1) == RationalInterval.point(0)


def test_enclosures_are_tight():
    assert log_enclosure(Fraction(7, 3)).width < Fraction(1, 2**100)
    assert pi_enclosure(64).width < Fraction(1, 2**60)


def test_log_rejects_non_positive():
    with pytest.raises(DomainError):
        RationalInterval(-1, 1).log()


def test_floor_and_ceil_decided_only_when_unambiguous():
    x = RationalInterval(Fraction(5, 2), Fraction(11, 4))
    assert floor_interval(x) == 2
    assert ceil_interval(x) == 3
    with pytest.raises(DomainError):
        floor_interval(RationalInterval(Fraction(9, 10), Fraction(11, 10)))


def test_rounded_is_outward():
    x = RationalInterval(Fraction(1, 3), Fraction(2, 3))
    r = x.rounded(32)
    assert r.contains(x)
    assert r.lo.denominator & (r.lo.denominator - 1) == 0


def test_max_min_abs():
    a = RationalInterval(-2, 1)
    assert a.max(0) == RationalInterval(0, 1)
    assert a.min(0) == RationalInterval(-2, 0)
    assert abs(a) == RationalInterval(0, 2)


def test_to_fraction_and_str():
    assert to_fraction("3/16") == Fraction(3, 16)
    assert to_fraction("1e-8") == Fraction(1, 10**8)
    assert fraction_str(Fraction(-3, 4)) == "-3/4"
    with pytest.raises(DomainError):
        to_fraction(None)
