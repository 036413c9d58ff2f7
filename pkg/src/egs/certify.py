"""
Certificates for bounds on t(N) and their bit-exact verifiers.

A Certificate is a compressed t-admissible subfactorization of N! (explicit
factors plus prime-range blocks); a DualCertificate is a table of exact
rational prime weights. Both verifiers use integer/rational arithmetic only.
"""
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Dict, Iterable, List, Optional, TextIO, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from src.egs.errors import CertificateFormatError, DomainError
from src.egs.interval import fraction_str
from src.egs.ntheory import (
    PrimeTable,
    factorize,
    legendre_valuations,
    sieve_primes,
    smallest_prime_factors,
)
from src.utils.constants import CERT_HEADER, DUAL_HEADER

logger = logging.getLogger(__name__)

_MAX_REPORTED_ERRORS = 20


@dataclass(frozen=True)
class PrimeBlock:
    """e copies of m*p for every prime p in [p_min, p_max]."""
    m: int
    p_min: int
    p_max: int
    e: int = 1

    def primes(self, table: PrimeTable) -> np.ndarray:
        return table.primes_in(self.p_min - 1, self.p_max)

    def count(self, table: PrimeTable) -> int:
        # primes past the table are reported structurally, not counted
        hi = min(self.p_max, table.limit)
        if hi < self.p_min:
            return 0
        return self.e * table.count_range(self.p_min - 1, hi)


@dataclass
class Certificate:
    N: int
    t: int
    explicit_factors: List[Tuple[int, int]] = field(default_factory=list)
    prime_blocks: List[PrimeBlock] = field(default_factory=list)

    @classmethod
    def from_factors(cls, N: int, t: int, factors: Iterable[int]) -> "Certificate":
        counts = Counter(factors)
        explicit = [(mult, f) for f, mult in sorted(counts.items(), reverse=True)]
        return cls(N=N, t=t, explicit_factors=explicit)

    def count(self, table: Optional[PrimeTable] = None) -> int:
        total = sum(mult for mult, _ in self.explicit_factors)
        if self.prime_blocks:
            table = table or sieve_primes(max(self.N, 2))
            total += sum(block.count(table) for block in self.prime_blocks)
        return total

    def min_factor(self) -> int:
        candidates = [f for _, f in self.explicit_factors]
        candidates += [b.m * b.p_min for b in self.prime_blocks]
        return min(candidates) if candidates else 0

    def expand(self, table: Optional[PrimeTable] = None) -> List[int]:
        """Materialise the multiset; only sensible for small N."""
        out: List[int] = []
        for mult, f in self.explicit_factors:
            out.extend([f] * mult)
        if self.prime_blocks:
            table = table or sieve_primes(max(self.N, 2))
            for b in self.prime_blocks:
                for p in b.primes(table).tolist():
                    out.extend([b.m * p] * b.e)
        return sorted(out, reverse=True)


@dataclass
class DualCertificate:
    N: int
    t: int
    weights: Dict[int, Fraction] = field(default_factory=dict)
    claimed_value: Optional[Fraction] = None

    def weight(self, p: int) -> Fraction:
        return self.weights.get(p, Fraction(0))


class VerificationReport(BaseModel):
    kind: str
    N: int
    t: int
    accepted: bool
    count: int = 0
    min_factor: int = 0
    surplus: Dict[int, int] = Field(default_factory=dict)
    bound_implied: str = ""
    value: Optional[str] = None
    proves_t_bound: bool = False
    errors: List[str] = Field(default_factory=list)


class BoundRecord(BaseModel):
    """Lower and upper bounds on t(N), each tagged with the method that proved it."""
    N: int
    lower: int
    lower_method: str
    upper: Optional[int] = None
    upper_method: Optional[str] = None
    certificate: Optional[str] = None
    dual_value: Optional[str] = None
    notes: List[str] = Field(default_factory=list)

    @property
    def exact(self) -> bool:
        return self.upper is not None and self.lower == self.upper


# ---------------------------------------------------------------------------
# Subfactorization certificates
# ---------------------------------------------------------------------------

def _structural_errors(cert: Certificate) -> List[str]:
    errors = []
    for i, (mult, f) in enumerate(cert.explicit_factors):
        if mult < 1:
            errors.append(f"F entry {i}: multiplicity {mult} < 1")
        if f < max(cert.t, 1):
            errors.append(f"F entry {i}: factor {f} < t={cert.t}")
    for i, b in enumerate(cert.prime_blocks):
        if b.p_min > b.p_max:
            errors.append(f"P entry {i}: p_min {b.p_min} > p_max {b.p_max}")
        if b.m < 1 or b.e < 1:
            errors.append(f"P entry {i}: cofactor and multiplicity must be positive")
        if b.m * b.p_min < cert.t:
            errors.append(f"P entry {i}: m*p_min = {b.m * b.p_min} < t={cert.t}")
        if b.p_max > cert.N:
            errors.append(f"P entry {i}: prime {b.p_max} exceeds N={cert.N}")
    return errors


def prime_usage(cert: Certificate, table: PrimeTable) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """Exponent of each prime <= N used by the certificate product."""
    primes = table.primes_in(1, cert.N)
    usage = np.zeros(len(primes), dtype=object)
    errors = []
    spf = smallest_prime_factors(min(max(cert.N, 2), 10**7))

    def add(p: int, amount: int):
        if p > cert.N:
            errors.append(f"prime {p} does not divide {cert.N}!")
            return
        usage[int(np.searchsorted(primes, p))] += amount

    for mult, f in cert.explicit_factors:
        if f < 1:
            continue
        for p, k in factorize(f, spf).items():
            add(p, k * mult)
    for b in cert.prime_blocks:
        if b.p_min > b.p_max or b.m < 1:
            continue
        lo = int(np.searchsorted(primes, b.p_min))
        hi = int(np.searchsorted(primes, b.p_max, side="right"))
        if hi > lo:
            usage[lo:hi] += b.e
        for p, k in factorize(b.m, spf).items():
            add(p, k * b.e * (hi - lo))
    return primes, usage, errors


def verify_subfactorization(cert: Certificate, table: Optional[PrimeTable] = None) -> VerificationReport:
    """Accept iff every factor >= t, the product divides N! and there are >= N factors."""
    table = table or sieve_primes(max(cert.N, 2))
    if table.limit < cert.N:
        raise DomainError(f"prime table limit {table.limit} < N={cert.N}")
    errors = _structural_errors(cert)
    primes, usage, usage_errors = prime_usage(cert, table)
    errors += usage_errors
    available = legendre_valuations(cert.N, primes).astype(object)
    surplus = available - usage
    negative = np.flatnonzero(surplus < 0)
    for i in negative[:_MAX_REPORTED_ERRORS]:
        errors.append(f"prime {int(primes[i])}: deficit {-int(surplus[i])}")
    count = cert.count(table)
    valid_product = not errors
    accepted = valid_product and count >= cert.N
    if accepted:
        bound = f"t({cert.N}) >= {cert.t}"
    elif valid_product:
        bound = f"M({cert.N},{cert.t}) >= {count}"
        errors.append(f"count {count} < N={cert.N}")
    else:
        bound = ""
    logger.info("[VERIFY] subfactorization N=%d t=%d count=%d accepted=%s",
                cert.N, cert.t, count, accepted)
    return VerificationReport(
        kind="subfactorization",
        N=cert.N,
        t=cert.t,
        accepted=accepted,
        count=count,
        min_factor=cert.min_factor(),
        surplus={int(p): int(s) for p, s in zip(primes, surplus) if s != 0},
        bound_implied=bound,
        proves_t_bound=accepted,
        errors=errors,
    )


# ---------------------------------------------------------------------------
# Dual certificates
# ---------------------------------------------------------------------------

def dual_constraint_lhs(N: int, t: int, weights: Dict[int, Fraction],
                        primes: np.ndarray) -> Tuple[int, np.ndarray]:
    """
    Scaled left-hand sides of sum_p w_p nu_p(j) for 0 <= j <= N.

    Returns:
        (D, lhs) where D is the common denominator and lhs[j] = D * sum_p w_p nu_p(j)
    """
    D = reduce(lambda a, b: a * b // math.gcd(a, b),
               (w.denominator for w in weights.values()), 1)
    scaled = {p: int(w * D) for p, w in weights.items() if w != 0}
    worst = max(scaled.values(), default=0) * max(1, N.bit_length())
    dtype = np.int64 if worst < 2**62 // max(1, len(scaled)) else object
    lhs = np.zeros(N + 1, dtype=dtype)
    for p in primes.tolist():
        W = scaled.get(p)
        if not W:
            continue
        pk = p
        while pk <= N:
            lhs[pk::pk] += W
            pk *= p
    return D, lhs


def verify_dual(cert: DualCertificate, table: Optional[PrimeTable] = None) -> VerificationReport:
    """
    Check monotone non-negative weights with sum_p w_p nu_p(j) >= 1 on [t, N].

    On success the value sum_p w_p nu_p(N!) bounds M(N, t) from above.
    """
    N, t = cert.N, cert.t
    if 2 * t > N:
        raise DomainError(f"dual certificates need t <= N/2 (N={N}, t={t})")
    table = table or sieve_primes(max(N, 2))
    primes = table.primes_in(1, N)
    errors = []
    for p, w in cert.weights.items():
        if w < 0:
            errors.append(f"weight of {p} is negative")
        if p > N or not table.is_prime(p):
            errors.append(f"weight given for {p}, which is not a prime <= N")
    plist = primes.tolist()
    for p, q in zip(plist, plist[1:]):
        if cert.weight(p) > cert.weight(q):
            errors.append(f"weights not monotone: w_{p} = {cert.weight(p)} > w_{q} = {cert.weight(q)}")
            if len(errors) >= _MAX_REPORTED_ERRORS:
                break
    D, lhs = dual_constraint_lhs(N, t, cert.weights, primes)
    window = lhs[t:N + 1]
    bad = np.flatnonzero(window < D)
    for i in bad[:_MAX_REPORTED_ERRORS]:
        j = t + int(i)
        errors.append(f"constraint fails at j={j}: sum = {Fraction(int(window[i]), D)} < 1")
    valuations = legendre_valuations(N, primes)
    value = sum((cert.weight(p) * int(v) for p, v in zip(plist, valuations.tolist())), Fraction(0))
    if cert.claimed_value is not None and value > cert.claimed_value:
        errors.append(f"value {value} exceeds claimed value {cert.claimed_value}")
    accepted = not errors
    floor_value = math.floor(value)
    proves = accepted and value < N
    bound = ""
    if accepted:
        bound = f"M({N},{t}) <= {floor_value}"
        if proves:
            bound += f"; t({N}) < {t}"
    logger.info("[VERIFY] dual N=%d t=%d value=%s accepted=%s", N, t, float(value), accepted)
    return VerificationReport(
        kind="dual",
        N=N,
        t=t,
        accepted=accepted,
        count=floor_value,
        bound_implied=bound,
        value=fraction_str(value),
        proves_t_bound=proves,
        errors=errors,
    )


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------

def _parse_fraction(token: str, line_number: int) -> Fraction:
    if "." in token or "e" in token.lower():
        raise CertificateFormatError(f"floating literal {token!r} not allowed", line_number)
    try:
        return Fraction(token)
    except (ValueError, ZeroDivisionError):
        raise CertificateFormatError(f"bad rational {token!r}", line_number)


def _parse_int(token: str, line_number: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise CertificateFormatError(f"bad integer {token!r}", line_number)


def parse_certificate(text: str) -> Union[Certificate, DualCertificate]:
    header = None
    N = t = None
    explicit: List[Tuple[int, int]] = []
    blocks: List[PrimeBlock] = []
    weights: Dict[int, Fraction] = {}
    claimed = None
    last_p = 0
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if header is None:
            if line not in (CERT_HEADER, DUAL_HEADER):
                raise CertificateFormatError(f"unknown header {line!r}", line_number)
            header = line
            continue
        tokens = line.split()
        tag, args = tokens[0], tokens[1:]
        if tag in ("N", "t"):
            if len(args) != 1:
                raise CertificateFormatError(f"{tag} takes one value", line_number)
            value = _parse_int(args[0], line_number)
            if tag == "N":
                N = value
            else:
                t = value
        elif tag == "F" and header == CERT_HEADER:
            if len(args) != 2:
                raise CertificateFormatError("F takes <mult> <factor>", line_number)
            explicit.append((_parse_int(args[0], line_number), _parse_int(args[1], line_number)))
        elif tag == "P" and header == CERT_HEADER:
            if len(args) != 4:
                raise CertificateFormatError("P takes <m> <pmin> <pmax> <e>", line_number)
            blocks.append(PrimeBlock(*(_parse_int(a, line_number) for a in args)))
        elif tag == "W" and header == DUAL_HEADER:
            if len(args) != 2:
                raise CertificateFormatError("W takes <p> <num>/<den>", line_number)
            p = _parse_int(args[0], line_number)
            if p <= last_p:
                raise CertificateFormatError("W lines must have ascending p", line_number)
            last_p = p
            weights[p] = _parse_fraction(args[1], line_number)
        elif tag == "V" and header == DUAL_HEADER:
            claimed = _parse_fraction(args[0], line_number)
        else:
            raise CertificateFormatError(f"unexpected line tag {tag!r}", line_number)
    if header is None:
        raise CertificateFormatError("empty certificate")
    if N is None or t is None:
        raise CertificateFormatError("missing N or t line")
    if header == CERT_HEADER:
        return Certificate(N=N, t=t, explicit_factors=explicit, prime_blocks=blocks)
    return DualCertificate(N=N, t=t, weights=weights, claimed_value=claimed)


def format_certificate(cert: Union[Certificate, DualCertificate]) -> str:
    if isinstance(cert, DualCertificate):
        lines = [DUAL_HEADER, f"N {cert.N}", f"t {cert.t}"]
        if cert.claimed_value is not None:
            lines.append(f"V {fraction_str(cert.claimed_value)}")
        for p in sorted(cert.weights):
            lines.append(f"W {p} {fraction_str(cert.weights[p])}")
    else:
        lines = [CERT_HEADER, f"N {cert.N}", f"t {cert.t}"]
        lines += [f"F {mult} {f}" for mult, f in cert.explicit_factors]
        lines += [f"P {b.m} {b.p_min} {b.p_max} {b.e}" for b in cert.prime_blocks]
    return "\n".join(lines) + "\n"


def read_certificate(source: Union[str, TextIO]) -> Union[Certificate, DualCertificate]:
    if isinstance(source, str):
        with open(source, "r") as handle:
            return parse_certificate(handle.read())
    return parse_certificate(source.read())


def write_certificate(cert: Union[Certificate, DualCertificate], target: Union[str, TextIO]) -> None:
    text = format_certificate(cert)
    if isinstance(target, str):
        with open(target, "w") as handle:
            handle.write(text)
    else:
        target.write(text)

