import os
from fractions import Fraction

import pytest

from src.egs.certify import Certificate
from src.egs.errors import CertificateFormatError, DomainError, ResourceLimitError
from src.egs.repair import (
    accounting,
    b_pieces,
    build_params,
    condition_failures,
    kb_block,
    kb_check,
    ledger,
    materialize,
    parse_interval_list,
    parse_tau,
    read_interval_list,
    reference_intervals,
    reference_notes,
    verify_intervals,
    verify_range,
)
from src.utils.constants import REPAIR_ALPHA_TOTAL, REPAIR_INTERVALS, REPAIR_TAIL_START

DATA = os.path.join(os.path.dirname(__file__), "..", "data")


@pytest.fixture(scope="module")
def book_1e11():
    return ledger(build_params(10**11))


def test_accounting_with_surplus_and_deficit():
    view = accounting([3, 4, 5, 5], N=5, t=3)
    assert view.surplus[2] == 1
    assert view.surplus[3] == 0
    assert view.deficits == {5: 1}
    assert not view.balanced
    assert float(view.excess.mid) == pytest.approx(1.3093, abs=1e-4)
    assert view.holds()


def test_accounting_balanced_multiset():
    view = accounting([2, 3, 4, 5], N=5, t=3)
    assert view.balanced
    assert float(view.excess.mid) == pytest.approx(0.3930, abs=1e-4)
    assert view.identity_gap().contains(0)


def test_accounting_from_certificate():
    cert = Certificate.from_factors(9, 3, [3, 3, 3, 3, 4, 4, 4, 5, 7])
    view = accounting(cert)
    assert view.size == 9
    assert view.deficits == {}
    assert view.holds()


def test_accounting_needs_order_and_threshold():
    with pytest.raises(DomainError):
        accounting([2, 3])
    with pytest.raises(DomainError):
        accounting([0, 3], N=5, t=2)


@pytest.mark.parametrize("rule, tau", [
    ("N/3", Fraction(1, 3)),
    ("2N/7", Fraction(2, 7)),
    ("0.3", Fraction(3, 10)),
    (Fraction(1, 4), Fraction(1, 4)),
])
def test_parse_tau(rule, tau):
    assert parse_tau(rule) == tau


def test_parse_tau_rejects_garbage():
    with pytest.raises(DomainError):
        parse_tau("N over 3")


def test_condition_failures():
    assert condition_failures(10**11, Fraction(1, 3), 189, 293, Fraction(9, 2)) == []
    assert any("t/K^2" in f for f in condition_failures(10**6, Fraction(1, 3), 189, 293, Fraction(9, 2)))
    assert any("K >= 5" in f for f in condition_failures(10**11, Fraction(1, 3), 189, 4, Fraction(9, 2)))
    assert any("1/e" in f for f in condition_failures(10**11, Fraction(2, 5), 189, 293, Fraction(9, 2)))


def test_build_params_rejections():
    with pytest.raises(DomainError):
        build_params(10**6)
    with pytest.raises(DomainError):
        build_params(10**11, K=4)
    with pytest.raises(DomainError):
        build_params((10**12, 10**11))
    with pytest.raises(DomainError):
        build_params(10**11, t_rule="3N/2")


def test_gamma_and_kappa_at_1e11():
    params = build_params(10**11)
    assert params.sigma == Fraction(1, 21)
    assert float(params.gamma2) == pytest.approx(0.1423165, rel=1e-4)
    assert float(params.gamma3) == pytest.approx(0.1059116, rel=1e-4)
    assert float(params.kappa_2star.hi) == pytest.approx(6.83002, rel=1e-4)


def test_b_pieces_tile_the_window():
    assert b_pieces(3, Fraction(1, 3)) == [
        (6, Fraction(1, 7), Fraction(1, 6)),
        (7, Fraction(1, 8), Fraction(1, 7)),
        (8, Fraction(1, 9), Fraction(1, 8)),
    ]


def test_ledger_entries_at_1e11(book_1e11):
    assert float(book_1e11.delta.lo) == pytest.approx(0.0986122, abs=1e-6)
    assert float(book_1e11.relative("delta1")) == pytest.approx(0.241447, abs=2e-6)
    assert float(book_1e11.relative("delta3")) == pytest.approx(0.051574, abs=2e-6)
    assert float(book_1e11.relative("alpha3")) == pytest.approx(0.361121, abs=3e-6)
    assert book_1e11.entries["delta4"].bound == 0
    assert book_1e11.entries["alpha4"].bound == 0
    assert book_1e11.entries["alpha1"].bound == 0
    assert float(book_1e11.relative("delta6")) < 3e-10
    assert float(book_1e11.relative("delta8")) < 6e-9
    assert float(book_1e11.relative("alpha6")) < 3e-10
    assert float(book_1e11.relative("alpha7")) < 6e-10


@pytest.mark.parametrize("name, value", [
    # the obstruction term carries the full total variation (about 1749 on (1/3K, 1]),
    # which puts delta2 just above the reference 0.504735
    ("delta2", 0.505704),
    ("delta5", 0.064066),
    ("delta7", 0.115153),
    ("alpha2", 0.251454),
    ("alpha5", 0.321520),
])
def test_delicate_entries_at_1e11(book_1e11, name, value):
    assert float(book_1e11.relative(name)) == pytest.approx(value, abs=1e-6)


def test_totals_at_1e11(book_1e11):
    delta_ratio = book_1e11.delta_sum().hi / book_1e11.delta.lo
    assert float(delta_ratio) == pytest.approx(0.977943, abs=1e-6)
    assert delta_ratio < 1
    assert book_1e11.alpha_sum().hi < REPAIR_ALPHA_TOTAL


@pytest.fixture(scope="module")
def book_tail():
    return ledger(build_params((REPAIR_TAIL_START, None)))


@pytest.mark.parametrize("name, value", [
    ("delta2", 0.060410),
    ("delta5", 0.073107),
    # kappa log(sqrt 12) / log(10^70/3) with kappa = log(4/3); 0.02212 does not follow from it
    ("delta7", 0.022642),
    ("alpha5", 0.170505),
])
def test_tail_entries(book_tail, name, value):
    assert float(book_tail.relative(name)) == pytest.approx(value, abs=1e-6)


def test_reference_notes_at_1e11(book_1e11):
    notes = reference_notes(book_1e11)
    flagged = {note.split(" ")[0] for note in notes}
    assert flagged == {"delta2", "delta5", "delta7", "alpha2", "alpha5", "sum"}
    assert any(note.startswith("alpha2 = ") and "is below the reference 0.269878" in note for note in notes)
    assert any(note.startswith("sum of delta_i = ") and "above the reference 0.9740" in note for note in notes)


def test_reference_notes_on_the_tail(book_tail):
    flagged = {note.split(" ")[0] for note in reference_notes(book_tail)}
    assert flagged == {"delta5", "delta7", "alpha5"}


def test_reference_notes_only_for_defaults():
    assert reference_notes(ledger(build_params(10**12))) == []
    assert reference_notes(ledger(build_params(10**11, A=200))) == []


def test_report_carries_reference_notes():
    report = verify_range(10**11, 10**11)
    assert report.verified
    assert report.reference_notes
    assert report.to_json()["reference_notes"] == report.reference_notes


@pytest.mark.parametrize("N", [10**11, 10**13, 10**20])
def test_monotone_entries_do_not_grow_with_n(N):
    small, large = ledger(build_params(N)), ledger(build_params(2 * N))
    tagged = [name for name, entry in small.entries.items() if entry.monotone]
    assert "delta2" in tagged and "alpha3" in tagged
    for name in tagged:
        assert large.entries[name].bound <= small.entries[name].bound, name


def test_sub_range_of_verified_range_verifies():
    assert verify_range(10**11, 5 * 10**11).verified
    assert verify_range(2 * 10**11, 3 * 10**11).verified


def test_reference_intervals_cover_to_the_tail():
    intervals = reference_intervals()
    assert intervals[:len(REPAIR_INTERVALS)] == REPAIR_INTERVALS
    assert intervals[-1] == (REPAIR_TAIL_START, None)
    assert read_interval_list(os.path.join(DATA, "repair_intervals.txt")) == intervals


def test_ledger_dump_is_serialisable(book_1e11):
    dump = book_1e11.dump()
    assert dump.N_lo == "100000000000"
    assert dump.tau == "1/3"
    names = [e.name for e in dump.entries]
    assert [n for n in names if n.startswith("delta")] == [f"delta{i}" for i in range(1, 9)]
    assert [n for n in names if n.startswith("alpha")] == [f"alpha{i}" for i in range(1, 8)]
    assert dump.model_dump_json()


def test_verify_range_rejects_small_n():
    report = verify_range(10**6, 10**7)
    assert report.status == "rejected"
    assert not report.verified
    assert report.failures
    assert report.to_json()["delta_ratio"] is None


def test_parse_interval_list():
    text = "# cover\nI 1e11 5e11\n\nI 5e11 1e14\nI 1e70 inf\n"
    assert parse_interval_list(text) == [
        (10**11, 5 * 10**11),
        (5 * 10**11, 10**14),
        (10**70, None),
    ]


@pytest.mark.parametrize("text, line", [
    ("I 1e11\n", 1),
    ("I 1e11 5e11\nJ 1 2\n", 2),
    ("I 5e11 1e11\n", 1),
    ("I 1e11 lots\n", 1),
])
def test_interval_list_errors(text, line):
    with pytest.raises(CertificateFormatError) as info:
        parse_interval_list(text)
    assert info.value.line_number == line


def test_interval_file_is_contiguous():
    intervals = read_interval_list(os.path.join(DATA, "repair_intervals.txt"))
    assert intervals[0][0] == 10**11
    assert intervals[-1][1] is None
    for (_, hi), (lo, _) in zip(intervals, intervals[1:]):
        assert hi == lo


def test_kb_blocks_and_prefix():
    assert kb_block(1) > 0
    report = kb_check()
    assert report.passed
    assert report.prefix_min >= Fraction(2, 5)
    assert 1.2424 < float(report.limit.mid) < 1.2425
    assert len(report.rows) == 100
    assert report.to_json()["passed"]


def test_kb_check_rejects_empty_range():
    with pytest.raises(DomainError):
        kb_check(0)


def test_materialize_needs_single_small_n():
    with pytest.raises(DomainError):
        materialize(build_params((10**11, None)))
    with pytest.raises(ResourceLimitError):
        materialize(build_params(30000, K=5), ceiling=1000)


@pytest.mark.slow
def test_materialized_densities_inside_enclosures():
    measured = materialize(build_params(30000, K=5))
    assert measured.size > 0
    assert not [v for v in measured.violations if v.startswith(("A_", "B_", "delta falls"))]


@pytest.mark.slow
def test_interval_file_verifies():
    intervals = read_interval_list(os.path.join(DATA, "repair_intervals.txt"))
    coverage = verify_intervals(intervals, threads=2)
    assert coverage.verified, coverage.gaps()
    for report in coverage.reports:
        assert report.delta_ratio <= 1
        assert report.alpha_total <= 1
