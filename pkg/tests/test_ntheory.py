import math
from fractions import Fraction

import numpy as np
import pytest

from src.egs.errors import DomainError
from src.egs.interval import RationalInterval, log_enclosure
from src.egs.ntheory import (
    StepFunctionDescriptor,
    StepPiece,
    error_majorant,
    factorial_log_bounds,
    factorize,
    kappa_bound,
    kappa_scan_ratio,
    largest_prime_factors,
    legendre_digit_form,
    legendre_valuation,
    log_factorial_per_n,
    pi_bounds,
    prime_count_range_bounds,
    prime_sum_bounds,
    rough_count,
    segmented_sieve,
    simple_sieve,
    smallest_prime_factors,
    smooth_ceiling,
    smooth_numbers,
)


def test_simple_sieve():
    assert simple_sieve(30).tolist() == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    assert simple_sieve(1).tolist() == []


def test_segmented_sieve_matches_simple():
    assert np.array_equal(segmented_sieve(10**5, segment=1000), simple_sieve(10**5))


def test_prime_table_counts(table):
    assert table.pi(100) == 25
    assert table.pi(10**6) == 78498
    assert table.count_range(10, 20) == 4
    assert table.primes_in(Fraction(21, 2), 20).tolist() == [11, 13, 17, 19]
    assert table.self_check()
    with pytest.raises(DomainError):
        table.pi(10**6 + 1)


def test_factor_tables():
    spf = smallest_prime_factors(100)
    lpf = largest_prime_factors(100)
    assert spf[91] == 7 and lpf[91] == 13
    assert lpf[1] == 1
    assert factorize(360) == {2: 3, 3: 2, 5: 1}
    assert factorize(360, spf) == {2: 3, 3: 2, 5: 1}
    assert factorize(97) == {97: 1}


def test_legendre():
    # 9! = 2^7 3^4 5 7
    assert [legendre_valuation(9, p) for p in (2, 3, 5, 7)] == [7, 4, 1, 1]
    for N in (10, 99, 1000):
        for p in (2, 3, 7):
            assert legendre_valuation(N, p) == legendre_digit_form(N, p)


def test_stirling_enclosure():
    for N in (1, 9, 100):
        assert factorial_log_bounds(N).contains(math.lgamma(N + 1))
    per_n = log_factorial_per_n(10**70)
    assert per_n.width < Fraction(1, 10**60)


def test_rough_count():
    assert rough_count(0, 12) == 4
    assert rough_count(Fraction(1, 2), Fraction(25, 2)) == 4
    with pytest.raises(DomainError):
        rough_count(5, 2)


def test_smooth_ceiling():
    assert [smooth_ceiling(x).value for x in (1, 5, 7, 10, 13)] == [1, 6, 8, 12, 16]
    assert smooth_numbers(20) == [1, 2, 3, 4, 6, 8, 9, 12, 16, 18]
    anchored = smooth_ceiling(1000, anchor_L=Fraction(9, 2))
    assert anchored.value >= 1000
    assert anchored.value == 2 ** anchored.n * 3 ** anchored.m


def test_kappa():
    assert kappa_bound(Fraction(9, 2)) == log_enclosure(Fraction(4, 3))
    assert kappa_bound(Fraction(1, 2)) == log_enclosure(2)
    assert kappa_scan_ratio(Fraction(9, 2), 1000) == Fraction(4, 3)
    with pytest.raises(DomainError):
        kappa_bound(Fraction(1, 3))


def test_pi_bounds_contain_exact_counts(table):
    assert pi_bounds(10**6).contains(78498)
    assert pi_bounds(100).contains(25)
    assert prime_count_range_bounds(10**4, 10**6).contains(table.count_range(10**4, 10**6))
    assert error_majorant(10**6) >= Fraction(95000383, 10**5)


def test_prime_sum_needs_large_y():
    with pytest.raises(DomainError):
        prime_count_range_bounds(1000, 2000)


def test_prime_sum_bounds_constant_function(table):
    b = StepFunctionDescriptor.constant(10**4, 10**6)
    exact = table.count_range(10**4, 10**6)
    assert prime_sum_bounds(10**4, 10**6, b, direction="lower") <= exact
    assert prime_sum_bounds(10**4, 10**6, b, direction="upper") >= exact


def test_step_descriptor():
    one = RationalInterval.point(1)
    pieces = (StepPiece(Fraction(0), Fraction(1), one, one, one),
              StepPiece(Fraction(1), Fraction(2), one * 2, one * 2, one * 2))
    d = StepFunctionDescriptor(pieces)
    assert d.integral() == RationalInterval.point(3)
    # |b(0+)| + |b(2)| + jump at 1
    assert d.tv_star() == 4
    with pytest.raises(DomainError):
        StepFunctionDescriptor((pieces[0], StepPiece(Fraction(3, 2), Fraction(2), one, one, one)))


@pytest.mark.slow
def test_pi_bounds_contain_exact_counts_up_to_1e7():
    primes = segmented_sieve(10**7)
    xs = set(np.unique(np.geomspace(2, 10**7, 400).astype(np.int64)).tolist())
    for k in range(3, 8):
        below = primes[primes <= 10**k][-25:].tolist()
        xs.update(below)
        xs.update(p - 1 for p in below)
    for x in sorted(xs):
        if x < 2:
            continue
        exact = int(np.searchsorted(primes, x, side="right"))
        assert pi_bounds(x).contains(exact), x
    for y, x in [(1423, 10**4), (10**5, 2 * 10**5), (3 * 10**6, 10**7), (1423, 10**7)]:
        exact = int(np.searchsorted(primes, x, side="right") - np.searchsorted(primes, y, side="right"))
        assert prime_count_range_bounds(y, x).contains(exact), (y, x)
