import os
from fractions import Fraction

import pytest

from src.egs.certify import (
    BoundRecord,
    Certificate,
    DualCertificate,
    PrimeBlock,
    format_certificate,
    parse_certificate,
    read_certificate,
    verify_dual,
    verify_subfactorization,
    write_certificate,
)
from src.egs.errors import CertificateFormatError, DomainError

DATA = os.path.join(os.path.dirname(__file__), "..", "data")


def test_nine_factorial_certificate_file():
    cert = read_certificate(os.path.join(DATA, "certificates", "t9_lower.cert"))
    report = verify_subfactorization(cert)
    assert report.accepted
    assert report.count == 9
    assert report.min_factor == 3
    assert report.surplus == {2: 1}
    assert report.bound_implied == "t(9) >= 3"


def test_factor_below_t_rejected():
    cert = Certificate.from_factors(9, 4, [3, 4, 4, 4, 5, 7, 9, 9, 8])
    report = verify_subfactorization(cert)
    assert not report.accepted
    assert any("factor 3 < t=4" in e for e in report.errors)


def test_product_not_dividing_factorial():
    # nine factors of at least 4 would need more than 2^7 3^4 5 7
    cert = Certificate.from_factors(9, 4, [4, 4, 4, 4, 5, 7, 9, 9, 6])
    report = verify_subfactorization(cert)
    assert not report.accepted
    assert any(e.startswith("prime 2: deficit") for e in report.errors)


def test_short_certificate_gives_m_bound():
    cert = Certificate(N=20, t=11, prime_blocks=[PrimeBlock(1, 11, 19)])
    report = verify_subfactorization(cert)
    assert not report.accepted
    assert report.count == 4
    assert report.bound_implied == "M(20,11) >= 4"


def test_block_past_n_is_rejected_not_raised():
    cert = Certificate(N=20, t=11, prime_blocks=[PrimeBlock(1, 11, 29)])
    report = verify_subfactorization(cert)
    assert not report.accepted
    assert report.count == 4
    assert any("prime 29 exceeds N=20" in e for e in report.errors)


def test_expand_blocks():
    cert = Certificate(N=20, t=11, explicit_factors=[(2, 12)], prime_blocks=[PrimeBlock(1, 11, 19, 1)])
    assert cert.expand() == [19, 17, 13, 12, 12, 11]
    assert cert.count() == 6


def _dual_ten():
    return DualCertificate(N=10, t=5, weights={2: Fraction(1, 2), 3: Fraction(1, 2), 5: Fraction(1), 7: Fraction(1)})


def test_dual_certificate_proves_upper_bound():
    report = verify_dual(_dual_ten())
    assert report.accepted
    assert report.value == "9/1"
    assert report.proves_t_bound
    assert report.bound_implied == "M(10,5) <= 9; t(10) < 5"


def test_dual_rejects_non_monotone_and_weak_weights():
    cert = _dual_ten()
    cert.weights[3] = Fraction(1, 3)
    report = verify_dual(cert)
    assert not report.accepted
    assert any("not monotone" in e for e in report.errors)
    assert any("j=6" in e for e in report.errors)


def test_dual_claimed_value_checked():
    cert = _dual_ten()
    cert.claimed_value = Fraction(17, 2)
    assert not verify_dual(cert).accepted


def test_dual_needs_t_at_most_half():
    with pytest.raises(DomainError):
        verify_dual(DualCertificate(N=10, t=6, weights={}))


def test_text_format(tmp_path):
    cert = Certificate(N=20, t=11, explicit_factors=[(2, 12)], prime_blocks=[PrimeBlock(1, 11, 19, 1)])
    text = format_certificate(cert)
    assert text.splitlines()[0] == "EGS-CERT v1"
    assert parse_certificate(text) == cert
    path = str(tmp_path / "dual.cert")
    write_certificate(_dual_ten(), path)
    assert read_certificate(path) == _dual_ten()


@pytest.mark.parametrize("text,line", [
    ("EGS-CERT v2\nN 9\n", 1),
    ("EGS-DUAL v1\nN 10\nt 5\nW 2 0.5\n", 4),
    ("EGS-DUAL v1\nN 10\nt 5\nW 3 1/2\nW 2 1/2\n", 5),
    ("EGS-CERT v1\nN 9\nt 3\nP 1 2 3\n", 4),
])
def test_format_errors_carry_line_numbers(text, line):
    with pytest.raises(CertificateFormatError) as info:
        parse_certificate(text)
    assert info.value.line_number == line


def test_missing_header_fields():
    with pytest.raises(CertificateFormatError):
        parse_certificate("EGS-CERT v1\nN 9\n")


def test_bound_record_exact():
    assert BoundRecord(N=9, lower=3, lower_method="greedy", upper=3, upper_method="ip").exact
    assert not BoundRecord(N=9, lower=3, lower_method="greedy").exact
