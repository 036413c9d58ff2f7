import io
import os
from fractions import Fraction

import pytest

from src.egs.errors import AxiomError, CertificateFormatError, DomainError, ResourceLimitError
from src.egs.rearrange import (
    Downset,
    FiniteMode,
    TailKind,
    TailRule,
    WeightTable,
    a_count,
    check_asym_crit,
    check_finite_crit,
    downset_analyze,
    max_deviation,
    parse_weight_table,
    power2_tail_capacity,
    quarter_certificate_check,
    read_weight_table,
    rough_upto,
    search_weights,
    t23_dp,
    t23_exact,
    t23_scan,
    tail_constant,
    verify_asym_crit,
    verify_finite_crit,
    write_weight_table,
)
from src.utils.constants import QUARTER_C, QUARTER_EPSILON, QUARTER_THRESHOLD

DATA = os.path.join(os.path.dirname(__file__), "..", "data")
EXAMPLE = os.path.join(DATA, "weights", "example_3_16.txt")


def test_density_of_small_downsets():
    table = downset_analyze([1, 2, 4])
    assert table.sigma == {1: Fraction(1, 2), 2: Fraction(1, 2), 4: Fraction(1)}
    assert table.identity_sum == 1

    table = downset_analyze([1, 2, 3, 4])
    assert table.sigma[1] == Fraction(1, 3)
    assert table.sigma[2] == Fraction(1, 2)
    assert table.sigma[3] == Fraction(1, 2)
    assert table.sigma[4] == 1


def test_downset_axioms():
    with pytest.raises(AxiomError):
        Downset.of([1, 3])
    with pytest.raises(AxiomError):
        Downset.of([2, 4])
    assert downset_analyze(Downset.smooth(3, 20)).identity_sum == 1


def test_rough_counts():
    assert rough_upto(210, 4) == 48
    assert rough_upto(12, 0) == 12
    assert rough_upto(Fraction(21, 2), 1) == 5
    assert rough_upto(0, 3) == 0


def test_a_count_and_deviation():
    D = [1, 2, 3, 4]
    assert a_count(1, D, 12) == 4
    assert a_count(4, D, 12) == 12
    assert max_deviation(1, [1, 2, 4]) == Fraction(1, 2)
    with pytest.raises(DomainError):
        a_count(5, D, 12)


@pytest.mark.parametrize("N", [1, 97, 1000, 10**4])
def test_sets_a_partition_the_naturals(N):
    table = downset_analyze([1, 2, 3, 5, 7])
    assert sum(a_count(d, table, N // d) for d in table.downset) == N


def test_example_weights_file():
    W = read_weight_table(EXAMPLE)
    assert W.downset == (1, 2, 4)
    assert W.tail.kind == TailKind.power2
    assert W.weight(2) == Fraction(3, 16)
    assert W.weight(3) == 0
    assert W.tail_sum(1) == Fraction(3, 8)
    assert W.nu_sum(2) == Fraction(3, 4)
    assert W.mass() == Fraction(3, 8)

    buffer = io.StringIO()
    write_weight_table(W, buffer)
    assert parse_weight_table(buffer.getvalue()).tail == W.tail


def test_asymptotic_criterion_below_three_sixteenths():
    W = read_weight_table(EXAMPLE)
    report = check_asym_crit(W.downset, Fraction(3, 16) - Fraction(1, 1000), W)
    assert report.passed, report.failures
    assert report.prime_margins[2] == 0
    assert report.threshold_margin > 0


@pytest.mark.parametrize("alpha", [Fraction(3, 16), Fraction(1, 4)])
def test_asymptotic_criterion_fails_at_or_above_limit(alpha):
    W = read_weight_table(EXAMPLE)
    assert not verify_asym_crit(None, alpha, W)


def test_asymptotic_criterion_needs_tail():
    W = WeightTable((1, 2, 4), {2: Fraction(1, 4)})
    report = check_asym_crit(None, Fraction(1, 10), W)
    assert not report.passed
    assert any("tail rule" in f for f in report.failures)


def test_tail_constant_of_example():
    W = read_weight_table(EXAMPLE)
    assert tail_constant(W, Fraction(1, 8)) >= Fraction(3, 8)


def test_zero_weights_fail_finite_criterion():
    W = WeightTable((1, 2, 4), {}, TailRule())
    for mode in FiniteMode:
        report = check_finite_crit(None, Fraction(1, 8), 100, W, mode=mode)
        assert not report.passed


def test_finite_criterion_rejects_bad_arguments():
    W = read_weight_table(EXAMPLE)
    with pytest.raises(DomainError):
        check_finite_crit(None, Fraction(1, 8), 0, W)
    with pytest.raises(DomainError):
        check_finite_crit(None, Fraction(1, 8), 100, W, mode="ledger", rounding="floor")


@pytest.mark.parametrize("text, line", [
    ("D: 1 2 4\na 3 x\n", 2),
    ("D: 1 2 4\ntail cubic 1\n", 2),
    ("D: 1 2 4\na 2 1/8\na 2 1/8\n", 3),
    ("D: 1 two\n", 1),
])
def test_weight_table_format_errors(text, line):
    with pytest.raises(CertificateFormatError) as info:
        parse_weight_table(text)
    assert info.value.line_number == line


def test_weight_table_requires_downset_line():
    with pytest.raises(CertificateFormatError):
        parse_weight_table("tail none\n")


def test_explicit_weights_below_tail_start():
    with pytest.raises(DomainError):
        WeightTable((1, 2, 4), {4: Fraction(1, 8)}, TailRule(TailKind.power2, Fraction(1, 8), 1))


POWER2_FROM_ONE = TailRule(TailKind.power2, Fraction(0), 1)
SEVEN_SMOOTH = Downset.smooth(7, 28)
HALVING_FROM_52 = TailRule(TailKind.halving, Fraction(0), 52)


def test_power2_capacity_of_example():
    assert power2_tail_capacity((1, 2, 4), Fraction(1, 8), 1) == (Fraction(1, 4), Fraction(3, 8))
    needed, allowed = power2_tail_capacity((1, 2, 4), Fraction(3, 16), 1)
    assert needed == allowed == Fraction(3, 8)
    with pytest.raises(DomainError):
        power2_tail_capacity((1, 2, 4), Fraction(1, 8), -1)


def test_search_recovers_example_tail():
    W = search_weights((1, 2, 4), Fraction(1, 8), POWER2_FROM_ONE)
    assert W is not None
    assert verify_asym_crit(None, Fraction(1, 8), W)
    assert Fraction(1, 4) < W.tail.c <= Fraction(3, 8)


def test_search_stops_at_the_example_capacity():
    assert search_weights((1, 2, 4), Fraction(3, 16), POWER2_FROM_ONE) is None


def test_search_needs_a_tail_rule():
    with pytest.raises(DomainError):
        search_weights((1, 2, 4), Fraction(1, 8), TailRule())
    with pytest.raises(DomainError):
        search_weights((1, 2, 4), Fraction(1, 8), POWER2_FROM_ONE, N=0)


def test_search_holds_back_finite_margins():
    N = 10**6
    W = search_weights((1, 2, 4), Fraction(1, 16), POWER2_FROM_ONE, N=N)
    assert W is not None
    assert verify_finite_crit(None, Fraction(1, 16), N, W)
    # the ceiling increase on the 2-adic row is about 4.4e-4 at this N
    assert 2 * W.tail.c + Fraction(4, 10**4) < Fraction(3, 4)


def test_finite_margins_can_exhaust_the_class():
    # near l = alpha N the deviation of the counts outweighs c/l
    assert search_weights((1, 2, 4), Fraction(1, 8), POWER2_FROM_ONE) is not None
    assert search_weights((1, 2, 4), Fraction(1, 8), POWER2_FROM_ONE, N=10**6) is None


@pytest.mark.slow
def test_power2_ansatz_on_full_downset_up_to_2048():
    table = downset_analyze(range(1, 2049))
    needed, allowed = power2_tail_capacity(table, Fraction(1, 3), 11)
    # the tail must beat 96.70 but the 2-adic budget stops c near 85.29
    assert float(needed) == pytest.approx(96.7048, abs=1e-3)
    assert float(allowed) == pytest.approx(85.2917, abs=1e-3)
    assert search_weights(table, Fraction(1, 3), TailRule(TailKind.power2, Fraction(0), 11)) is None

    needed, allowed = power2_tail_capacity(table, Fraction(1, 3), 12)
    assert allowed > needed


def test_search_two_sevenths_asymptotic():
    W = search_weights(SEVEN_SMOOTH, Fraction(2, 7), HALVING_FROM_52)
    assert W is not None
    assert verify_asym_crit(SEVEN_SMOOTH, Fraction(2, 7), W)
    assert all(l < 52 and l in SEVEN_SMOOTH for l in W.explicit)


def test_search_two_sevenths_at_finite_n():
    N = 8 * 10**6
    W = search_weights(SEVEN_SMOOTH, Fraction(2, 7), HALVING_FROM_52, N=N)
    if W is not None:
        report = check_finite_crit(SEVEN_SMOOTH, Fraction(2, 7), N, W)
        assert report.passed, report.failures
        assert all(margin >= 0 for margin in report.prime_margins.values())


@pytest.mark.parametrize("N", range(1, 41))
def test_t23_milp_matches_dynamic_programming(N):
    assert t23_exact(N) == t23_dp(N)


def test_t23_small_values():
    assert t23_exact(1) == 1
    assert [row["t23"] for row in t23_scan([1, 2, 3], threads=1)] == [t23_exact(n) for n in (1, 2, 3)]


def test_t23_limits():
    with pytest.raises(ResourceLimitError):
        t23_exact(10**6)
    with pytest.raises(ResourceLimitError):
        t23_dp(1001)
    with pytest.raises(DomainError):
        t23_exact(0)


@pytest.mark.slow
def test_t23_reaches_quarter_at_26244():
    assert t23_exact(26244) == 6561


@pytest.mark.slow
@pytest.mark.parametrize("N", [26245, 26500, 27000])
def test_t23_below_quarter_after_26244(N):
    assert 4 * t23_exact(N) < N


def test_quarter_certificate():
    report = quarter_certificate_check()
    assert report.passed, report.failures + report.mismatches
    assert report.epsilon == QUARTER_EPSILON
    assert report.C == QUARTER_C
    assert report.threshold == QUARTER_THRESHOLD
    assert report.to_json()["threshold"] == 1328148


def test_quarter_certificate_detects_weak_weights():
    report = quarter_certificate_check(weights={1: Fraction(1, 32)})
    assert not report.passed
