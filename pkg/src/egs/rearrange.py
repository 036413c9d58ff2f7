"""
Rearrangement certificates.

A downset D fixes which small factors d are pulled out of {1..N}; the numbers
left behind with cofactor d form the set A_{d,D} of density sigma_{d,D}.
Weights a_l describe which proportion of the remaining factors is multiplied
by l. The finite criterion certifies t(N) >= alpha N for one N, the
asymptotic criterion for all large N. This module also computes t_{2,3}(N)
exactly and checks the certificate that keeps t_{2,3}(N) below N/4.
"""
import bisect
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from src.egs.errors import (
    AxiomError,
    CertificateFormatError,
    DomainError,
    ResourceLimitError,
    VerificationError,
)
from src.egs.interval import fraction_str, log2_enclosure, log_enclosure, to_fraction
from src.egs.ntheory import factorize, legendre_valuation, simple_sieve, smooth_numbers, valuation
from src.services.settings import get_settings
from src.utils.constants import (
    QUARTER_C,
    QUARTER_C2,
    QUARTER_C3,
    QUARTER_EPSILON,
    QUARTER_MAX_NU2,
    QUARTER_MAX_NU3,
    QUARTER_THRESHOLD,
    QUARTER_W,
    QUARTER_W1,
    WEIGHTS_HEADER,
)
from src.utils.helpers import parallel_map

logger = logging.getLogger(__name__)

# Periodic counting tables are built up to this period (2*3*5*7*11*13*17*19).
_PERIOD_LIMIT = 9_699_690
_GRID = 1 << 40
_DP_CEILING = 1000
# LP rows are tightened by this much to absorb solver feasibility tolerance
_LP_MARGIN = 1e-6
_SEARCH_ROUNDS = 4


# ---------------------------------------------------------------------------
# Downsets and densities
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _primes_upto(limit: int) -> Tuple[int, ...]:
    return tuple(int(p) for p in simple_sieve(limit))


def _prime_factors(n: int) -> List[int]:
    return sorted(factorize(n)) if n > 1 else []


def _first_primes(k: int) -> Tuple[int, ...]:
    limit = 16
    while True:
        primes = _primes_upto(limit)
        if len(primes) >= k:
            return primes[:k]
        limit *= 2


def _check_axioms(elements: Tuple[int, ...]) -> None:
    members = set(elements)
    if not elements or elements[0] < 1:
        raise AxiomError(elements[0] if elements else 0, "elements must be positive integers")
    if 1 not in members:
        raise AxiomError(1, "a downset must contain 1")
    for d in elements:
        for p in _prime_factors(d):
            base = d // p
            if base not in members:
                raise AxiomError(d, f"divisor {base} is missing")
            for q in _primes_upto(p - 1):
                if q * base not in members:
                    raise AxiomError(d, f"{p}*{base} is present but {q}*{base} = {q * base} is not")


@dataclass(frozen=True)
class Downset:
    """A finite set of naturals closed under divisors and under lowering a prime factor."""
    elements: Tuple[int, ...]

    def __post_init__(self):
        elements = tuple(sorted({int(d) for d in self.elements}))
        _check_axioms(elements)
        object.__setattr__(self, "elements", elements)

    @classmethod
    def of(cls, D: Union["Downset", Iterable[int]]) -> "Downset":
        return D if isinstance(D, Downset) else cls(tuple(D))

    @classmethod
    def smooth(cls, prime_bound: int, limit: int) -> "Downset":
        """All prime_bound-smooth numbers up to limit."""
        return cls(tuple(n for n in range(1, limit + 1)
                         if all(p <= prime_bound for p in _prime_factors(n))))

    def __contains__(self, d) -> bool:
        return d in set(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def max(self) -> int:
        return self.elements[-1]

    @property
    def primes(self) -> List[int]:
        return sorted({p for d in self.elements for p in _prime_factors(d)})

    def defining_primes(self, d: int) -> Tuple[int, ...]:
        """Primes p with p < P+(d) or pd in D; always an initial segment of the primes."""
        if d not in self:
            raise DomainError(f"{d} is not in the downset")
        members = set(self.elements)
        largest = max(_prime_factors(d), default=1)
        chosen = set(_primes_upto(largest - 1))
        for p in _primes_upto(max(2, self.max // d)):
            if p * d in members:
                chosen.add(p)
        primes = tuple(sorted(chosen))
        if primes != _first_primes(len(primes)):
            raise VerificationError(f"defining primes of {d} are not an initial segment: {primes}")
        return primes


@dataclass(frozen=True)
class DensityTable:
    downset: Downset
    sigma: Dict[int, Fraction]
    primes: Dict[int, Tuple[int, ...]]

    @property
    def identity_sum(self) -> Fraction:
        return sum((s / d for d, s in self.sigma.items()), Fraction(0))

    def rows(self) -> List[dict]:
        return [{"d": d, "sigma": fraction_str(self.sigma[d]), "primes": " ".join(map(str, self.primes[d]))}
                for d in self.downset]


def downset_analyze(D: Union[Downset, Iterable[int]]) -> DensityTable:
    """Validate the downset axioms and compute every sigma_{d,D} exactly."""
    downset = Downset.of(D)
    sigma, primes = {}, {}
    for d in downset:
        ps = downset.defining_primes(d)
        s = Fraction(1)
        for p in ps:
            s *= Fraction(p - 1, p)
        sigma[d], primes[d] = s, ps
    table = DensityTable(downset, sigma, primes)
    if table.identity_sum != 1:
        raise VerificationError(f"sum of sigma_d/d is {table.identity_sum}, not 1")
    return table


@lru_cache(maxsize=16)
def _period_prefix(k: int) -> np.ndarray:
    """prefix[n] = #{1 <= m <= n : m has no prime factor among the first k primes}, 0 <= n <= period."""
    period = math.prod(_first_primes(k))
    if period > _PERIOD_LIMIT:
        raise ResourceLimitError(f"period {period} of the first {k} primes is too large to tabulate")
    keep = np.ones(period + 1, dtype=bool)
    keep[0] = False
    for p in _first_primes(k):
        keep[::p] = False
    return np.cumsum(keep).astype(np.int64)


@lru_cache(maxsize=1 << 16)
def _legendre_phi(x: int, k: int) -> int:
    if k == 0 or x == 0:
        return x
    p = _first_primes(k)[k - 1]
    return _legendre_phi(x, k - 1) - _legendre_phi(x // p, k - 1)


def rough_upto(x, k: int) -> int:
    """Number of integers in [1, x] free of the first k primes."""
    n = math.floor(to_fraction(x))
    if n <= 0:
        return 0
    if k == 0:
        return n
    if math.prod(_first_primes(k)) <= _PERIOD_LIMIT:
        prefix = _period_prefix(k)
        period = len(prefix) - 1
        q, r = divmod(n, period)
        return q * int(prefix[-1]) + int(prefix[r])
    return _legendre_phi(n, k)


def _as_table(D) -> DensityTable:
    return D if isinstance(D, DensityTable) else downset_analyze(D)


def a_count(d: int, D, x) -> int:
    """|A_{d,D} cap [1, x]|."""
    table = _as_table(D)
    if d not in table.sigma:
        raise DomainError(f"{d} is not in the downset")
    return rough_upto(x, len(table.primes[d]))


def max_deviation(d: int, D) -> Fraction:
    """sup over real x of |#(A_{d,D} cap [1, x]) - sigma_{d,D} x|, from one full period."""
    table = _as_table(D)
    prefix = _period_prefix(len(table.primes[d]))
    period = len(prefix) - 1
    phi = int(prefix[-1])
    n = np.arange(period, dtype=np.int64)
    counts = prefix[:period]
    above = int((counts * period - phi * n).max())
    below = int((phi * (n + 1) - counts * period).max())
    return Fraction(max(above, below), period)


class _DensityProfile:
    """Prefix sums that evaluate sum_d sigma_d min(1/d, alpha/l) in O(log |D|)."""

    def __init__(self, table: DensityTable):
        self.table = table
        self.ds = list(table.downset.elements)
        self.sigma_prefix = [Fraction(0)]
        for d in self.ds:
            self.sigma_prefix.append(self.sigma_prefix[-1] + table.sigma[d])
        self.ratio_suffix = [Fraction(0)] * (len(self.ds) + 1)
        for i in range(len(self.ds) - 1, -1, -1):
            d = self.ds[i]
            self.ratio_suffix[i] = self.ratio_suffix[i + 1] + table.sigma[d] / d

    def threshold_rhs(self, ell: int, alpha: Fraction) -> Fraction:
        i = bisect.bisect_left(self.ds, ell / alpha)
        return alpha / ell * self.sigma_prefix[i] + self.ratio_suffix[i]

    def prime_rhs(self, p: int) -> Fraction:
        return sum((self.table.sigma[d] * valuation(d, p) / d for d in self.ds if d % p == 0), Fraction(0))


# ---------------------------------------------------------------------------
# Weight tables
# ---------------------------------------------------------------------------

class TailKind(str, Enum):
    power2 = "power2"
    halving = "halving"
    none = "none"


@dataclass(frozen=True)
class TailRule:
    """
    power2: a_{2^r} = c / 2^r for r >= r0 (start = r0).
    halving: a_l = a_{l/2} / 2 for even l >= l0 (start = l0).
    """
    kind: TailKind = TailKind.none
    c: Fraction = Fraction(0)
    start: int = 0

    @property
    def first_index(self) -> Optional[int]:
        if self.kind == TailKind.power2:
            return 1 << self.start
        if self.kind == TailKind.halving:
            return self.start
        return None

    def describe(self) -> str:
        if self.kind == TailKind.power2:
            return f"power2 {fraction_str(self.c)} {self.start}"
        if self.kind == TailKind.halving:
            return f"halving {self.start}"
        return "none"


@dataclass
class WeightTable:
    downset: Tuple[int, ...]
    explicit: Dict[int, Fraction] = field(default_factory=dict)
    tail: TailRule = field(default_factory=TailRule)

    def __post_init__(self):
        self.tail = TailRule(TailKind(self.tail.kind), to_fraction(self.tail.c), int(self.tail.start))
        self.explicit = {int(l): to_fraction(a) for l, a in self.explicit.items() if to_fraction(a) != 0}
        for ell, a in self.explicit.items():
            if ell < 1 or a < 0:
                raise DomainError(f"weight a_{ell} = {a} must be non-negative with l >= 1")
        first = self.tail.first_index
        if first is not None and self.explicit and max(self.explicit) >= first:
            raise DomainError(f"explicit weights must stay below the tail start {first}")
        if self.tail.kind == TailKind.power2 and (self.tail.c < 0 or self.tail.start < 0):
            raise DomainError("power2 tail needs c >= 0 and r0 >= 0")
        if self.tail.kind == TailKind.halving and self.tail.start < 2:
            raise DomainError("halving tail needs l0 >= 2")
        self._keys = sorted(self.explicit)
        suffix = [Fraction(0)] * (len(self._keys) + 1)
        for i in range(len(self._keys) - 1, -1, -1):
            suffix[i] = suffix[i + 1] + self.explicit[self._keys[i]]
        self._suffix = suffix

    def seeds(self) -> Dict[int, Fraction]:
        if self.tail.kind != TailKind.halving:
            return {}
        return {s: a for s, a in self.explicit.items() if 2 * s >= self.tail.start}

    def weight(self, ell: int) -> Fraction:
        if ell in self.explicit:
            return self.explicit[ell]
        kind = self.tail.kind
        if kind == TailKind.power2 and ell >= self.tail.first_index and ell & (ell - 1) == 0:
            return self.tail.c / ell
        if kind == TailKind.halving and ell >= self.tail.start and ell % 2 == 0:
            return self.weight(ell // 2) / 2
        return Fraction(0)

    def support(self, limit: int) -> List[Tuple[int, Fraction]]:
        """(l, a_l) with a_l > 0 and l <= limit, ascending."""
        out = [(l, a) for l, a in self.explicit.items() if l <= limit]
        if self.tail.kind == TailKind.power2 and self.tail.c > 0:
            v = self.tail.first_index
            while v <= limit:
                out.append((v, self.tail.c / v))
                v *= 2
        for s, a in self.seeds().items():
            v, w = 2 * s, a / 2
            while v <= limit:
                out.append((v, w))
                v, w = 2 * v, w / 2
        return sorted(out)

    def mass(self) -> Fraction:
        total = self._suffix[0]
        if self.tail.kind == TailKind.power2:
            total += 2 * self.tail.c / self.tail.first_index
        return total + sum(self.seeds().values(), Fraction(0))

    def nu_sum(self, p: int) -> Fraction:
        """sum_l nu_p(l) a_l including the tail in closed form."""
        total = sum((valuation(l, p) * a for l, a in self.explicit.items() if l % p == 0), Fraction(0))
        if self.tail.kind == TailKind.power2 and p == 2:
            total += 2 * self.tail.c * (self.tail.start + 1) / self.tail.first_index
        for s, a in self.seeds().items():
            total += valuation(s, p) * a + (2 * a if p == 2 else 0)
        return total

    def tail_sum(self, ell: int) -> Fraction:
        """S(l) = sum of a_l' over l' > l."""
        total = self._suffix[bisect.bisect_right(self._keys, ell)]
        if self.tail.kind == TailKind.power2:
            r = max(self.tail.start, int(ell).bit_length())
            total += 2 * self.tail.c / (1 << r)
        for s, a in self.seeds().items():
            j = 1
            while (s << j) <= ell:
                j += 1
            total += 2 * a / (1 << j)
        return total

    def primes(self) -> List[int]:
        out = {p for l in self.explicit for p in _prime_factors(l)}
        if self.tail.kind == TailKind.power2 and self.tail.c > 0 or self.seeds():
            out.add(2)
        return sorted(out)

    def scaling_start(self, alpha) -> int:
        """A power of two L beyond which S(2l) = S(l)/2 and the threshold sums halve as well."""
        need = max(self.tail.first_index or 1, max(self._keys, default=0) + 1,
                   math.ceil(to_fraction(alpha) * max(self.downset)), 1)
        return 1 << (need - 1).bit_length()

    def to_text(self) -> str:
        lines = [f"{WEIGHTS_HEADER} " + " ".join(map(str, self.downset))]
        lines += [f"a {l} {fraction_str(self.explicit[l])}" for l in self._keys]
        lines.append(f"tail {self.tail.describe()}")
        return "\n".join(lines) + "\n"


def _parse_rational(token: str, line_number: int) -> Fraction:
    try:
        return Fraction(token)
    except (ValueError, ZeroDivisionError):
        raise CertificateFormatError(f"bad rational {token!r}", line_number)


def parse_weight_table(text: str) -> WeightTable:
    downset = None
    explicit: Dict[int, Fraction] = {}
    tail = TailRule()
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith(WEIGHTS_HEADER):
            try:
                downset = tuple(int(tok) for tok in line[len(WEIGHTS_HEADER):].split())
            except ValueError:
                raise CertificateFormatError("D: takes integers", line_number)
            continue
        tokens = line.split()
        if tokens[0] == "a" and len(tokens) == 3:
            try:
                ell = int(tokens[1])
            except ValueError:
                raise CertificateFormatError(f"bad index {tokens[1]!r}", line_number)
            if ell in explicit:
                raise CertificateFormatError(f"duplicate weight for l={ell}", line_number)
            explicit[ell] = _parse_rational(tokens[2], line_number)
        elif tokens[0] == "tail" and len(tokens) >= 2:
            kind = tokens[1]
            if kind == "power2" and len(tokens) == 4:
                tail = TailRule(TailKind.power2, _parse_rational(tokens[2], line_number), int(tokens[3]))
            elif kind == "halving" and len(tokens) == 3:
                tail = TailRule(TailKind.halving, Fraction(0), int(tokens[2]))
            elif kind == "none" and len(tokens) == 2:
                tail = TailRule()
            else:
                raise CertificateFormatError(f"bad tail rule {line!r}", line_number)
        else:
            raise CertificateFormatError(f"unexpected line {line!r}", line_number)
    if downset is None:
        raise CertificateFormatError("missing 'D:' line")
    try:
        return WeightTable(downset, explicit, tail)
    except DomainError as exc:
        raise CertificateFormatError(str(exc))


def read_weight_table(source: Union[str, TextIO]) -> WeightTable:
    if isinstance(source, str):
        with open(source, "r") as handle:
            return parse_weight_table(handle.read())
    return parse_weight_table(source.read())


def write_weight_table(table: WeightTable, target: Union[str, TextIO]) -> None:
    if isinstance(target, str):
        with open(target, "w") as handle:
            handle.write(table.to_text())
    else:
        target.write(table.to_text())


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------

class FiniteMode(str, Enum):
    ledger = "ledger"
    exact = "exact"


class Rounding(str, Enum):
    ceil = "ceil"
    floor = "floor"


@dataclass
class CritReport:
    kind: str
    alpha: Fraction
    N: Optional[int] = None
    failures: List[str] = field(default_factory=list)
    prime_margins: Dict[int, Fraction] = field(default_factory=dict)
    threshold_margin: Optional[Fraction] = None
    worst_threshold: Optional[int] = None
    checked_thresholds: int = 0
    notes: Dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures

    def record_threshold(self, ell: int, margin: Fraction):
        self.checked_thresholds += 1
        if self.threshold_margin is None or margin < self.threshold_margin:
            self.threshold_margin, self.worst_threshold = margin, ell

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "alpha": fraction_str(self.alpha),
            "N": self.N,
            "passed": self.passed,
            "failures": self.failures,
            "prime_margins": {str(p): fraction_str(m) for p, m in self.prime_margins.items()},
            "threshold_margin": None if self.threshold_margin is None else fraction_str(self.threshold_margin),
            "worst_threshold": self.worst_threshold,
            "checked_thresholds": self.checked_thresholds,
            "notes": self.notes,
        }


def _resolve(D, W: WeightTable) -> DensityTable:
    return _as_table(W.downset if D is None else D)


def check_asym_crit(D, alpha, W: WeightTable) -> CritReport:
    """
    Check the asymptotic criterion: for every prime p,
    sum_l nu_p(l) a_l <= sum_d sigma_d nu_p(d)/d, and for every natural l,
    sum_{l' > l} a_l' > sum_d sigma_d min(1/d, alpha/l) strictly.
    """
    alpha = to_fraction(alpha)
    report = CritReport("asymptotic", alpha)
    table = _resolve(D, W)
    profile = _DensityProfile(table)
    if not 0 < alpha < 1:
        report.failures.append(f"alpha={alpha} must lie in (0, 1)")
        return report
    if not table.downset.primes:
        report.failures.append("the downset contains no prime")
    for p in sorted(set(table.downset.primes) | set(W.primes())):
        margin = profile.prime_rhs(p) - W.nu_sum(p)
        report.prime_margins[p] = margin
        if margin < 0:
            report.failures.append(f"prime {p}: weights use {W.nu_sum(p)} > {profile.prime_rhs(p)}")
    if W.tail.kind == TailKind.none:
        report.failures.append("finitely supported weights cannot cover every threshold; a tail rule is needed")
        return report
    L = W.scaling_start(alpha)
    for ell in range(1, 2 * L):
        margin = W.tail_sum(ell) - profile.threshold_rhs(ell, alpha)
        report.record_threshold(ell, margin)
        if margin <= 0:
            report.failures.append(f"threshold l={ell}: tail sum {W.tail_sum(ell)} "
                                   f"<= {profile.threshold_rhs(ell, alpha)}")
            break
    report.notes["scaling_start"] = str(L)
    logger.info("[REARRANGE] asymptotic alpha=%s |D|=%d thresholds=%d passed=%s",
                alpha, len(table.downset), report.checked_thresholds, report.passed)
    return report


def verify_asym_crit(D, alpha, W: WeightTable) -> bool:
    return check_asym_crit(D, alpha, W).passed


def tail_constant(W: WeightTable, alpha) -> Fraction:
    """Smallest A with l S(l) <= A for every natural l."""
    L = W.scaling_start(alpha)
    best = max((ell * W.tail_sum(ell) for ell in range(1, L)), default=Fraction(0))
    return max([best] + [(m + 1) * W.tail_sum(m) for m in range(L, 2 * L)])


def _ceiling_error_bound(N: int, L_exp: int, odd_parts: int, bits: int = None) -> Fraction:
    """(L + log2 N) * (#odd parts) * log2 N / N, as an upper bound."""
    lg = log_enclosure(N, bits) / log2_enclosure(bits)
    return ((L_exp + lg) * odd_parts * lg / N).hi


def _odd_parts(indices: Sequence[int]) -> int:
    return len({l >> (l & -l).bit_length() - 1 for l in indices})


def _ceiling_increase(indices: Sequence[int], primes: Sequence[int], N: int, L_exp: int) -> Dict[int, Fraction]:
    """Upper bound on how much ceiling each weight at these indices raises sum_l nu_p(l) a_l."""
    out = {}
    for p in primes:
        increase = sum((Fraction(valuation(l, p), N) for l in indices if l % p == 0), Fraction(0))
        if p == 2:
            increase = max(increase, _ceiling_error_bound(N, L_exp, _odd_parts(indices)))
        out[p] = increase
    return out


def check_finite_crit(D, alpha, N: int, W: WeightTable, L_exp: int = 2,
                      mode: FiniteMode = FiniteMode.ledger,
                      rounding: Rounding = Rounding.ceil) -> CritReport:
    """
    Check the finite criterion for the modified weights a'_l = ceil(a_l N)/N
    (or floor) for l < 2^L_exp N and 0 beyond.

    Ledger mode bounds the modification and the density deviations from the
    asymptotic sums; exact mode recomputes both sides directly.
    """
    alpha, mode, rounding = to_fraction(alpha), FiniteMode(mode), Rounding(rounding)
    if N < 1 or L_exp < 0:
        raise DomainError("N >= 1 and L >= 0 required")
    if mode == FiniteMode.ledger and rounding != Rounding.ceil:
        raise DomainError("ledger mode bounds the ceiling modification only")
    report = CritReport(f"finite-{mode.value}", alpha, N)
    table = _resolve(D, W)
    profile = _DensityProfile(table)
    cutoff = (1 << L_exp) * N
    support = W.support(cutoff - 1)
    primes = sorted(set(table.downset.primes) | set(W.primes()))

    if mode == FiniteMode.ledger:
        dev = {d: max_deviation(d, table) for d in table.downset}
        odd_parts = _odd_parts([l for l, _ in support])
        increases = _ceiling_increase([l for l, _ in support], primes, N, L_exp)
        for p in primes:
            lhs = W.nu_sum(p) + increases[p]
            rhs = sum((valuation(d, p) * (table.sigma[d] / d - dev[d] / N)
                       for d in table.downset if d % p == 0), Fraction(0))
            report.prime_margins[p] = rhs - lhs
            if lhs > rhs:
                report.failures.append(f"prime {p}: {float(lhs):.9g} > {float(rhs):.9g}")
        truncated = W.tail_sum(cutoff - 1)
        slack = sum(dev.values(), Fraction(0)) / N

        def lhs_of(ell):
            return W.tail_sum(ell) - truncated

        def rhs_of(ell):
            return profile.threshold_rhs(ell, alpha) + slack

        report.notes["tail_constant"] = fraction_str(tail_constant(W, alpha))
        report.notes["odd_parts"] = str(odd_parts)
    else:
        scale = math.ceil if rounding == Rounding.ceil else math.floor
        modified = [(l, Fraction(scale(a * N), N)) for l, a in support]
        for p in primes:
            lhs = sum((valuation(l, p) * a for l, a in modified if l % p == 0), Fraction(0))
            rhs = sum((Fraction(valuation(d, p) * a_count(d, table, N // d), N)
                       for d in table.downset if d % p == 0), Fraction(0))
            report.prime_margins[p] = rhs - lhs
            if lhs > rhs:
                report.failures.append(f"prime {p}: {lhs} > {rhs}")
        keys = [l for l, _ in modified]
        suffix = [Fraction(0)] * (len(modified) + 1)
        for i in range(len(modified) - 1, -1, -1):
            suffix[i] = suffix[i + 1] + modified[i][1]

        def lhs_of(ell):
            return suffix[bisect.bisect_right(keys, ell)]

        def rhs_of(ell):
            below = -(-alpha * N // ell) - 1
            return Fraction(sum(a_count(d, table, min(N // d, below)) for d in table.downset), N)

    thresholds = sorted({1} | {l for l, _ in support if l <= alpha * N})
    for ell in thresholds:
        margin = lhs_of(ell) - rhs_of(ell)
        report.record_threshold(ell, margin)
        if margin < 0:
            report.failures.append(f"threshold l={ell}: {float(lhs_of(ell)):.9g} < {float(rhs_of(ell)):.9g}")
    logger.info("[REARRANGE] finite mode=%s N=%d alpha=%s thresholds=%d passed=%s",
                mode.value, N, alpha, report.checked_thresholds, report.passed)
    return report


def verify_finite_crit(D, alpha, N: int, W: WeightTable, L_exp: int = 2,
                       mode: FiniteMode = FiniteMode.ledger, rounding: Rounding = Rounding.ceil) -> bool:
    return check_finite_crit(D, alpha, N, W, L_exp, mode, rounding).passed


# ---------------------------------------------------------------------------
# Weight search
# ---------------------------------------------------------------------------

def power2_tail_capacity(D, alpha, r0: int) -> Tuple[Fraction, Fraction]:
    """
    (c needed, c allowed) for the tail a_{2^r} = c/2^r, r >= r0.

    Far out only the tail covers the thresholds, so c must exceed
    alpha * sum_d sigma_d. The 2-adic budget caps c at
    2^r0 sum_d sigma_d nu_2(d)/d / (2 (r0 + 1)) even with no explicit
    weights. The class holds no certificate unless needed < allowed.
    """
    alpha = to_fraction(alpha)
    if r0 < 0:
        raise DomainError("power2 tail needs r0 >= 0")
    table = _as_table(D)
    needed = alpha * sum(table.sigma.values(), Fraction(0))
    allowed = _DensityProfile(table).prime_rhs(2) * (1 << r0) / (2 * (r0 + 1))
    return needed, allowed


@dataclass(frozen=True)
class _FiniteReserve:
    """Ledger margins at one N, held back from the LP rows."""
    prime: Dict[int, Fraction]
    deviation: Fraction
    cutoff: int
    reach: Fraction

    def multiplier(self, ell: int, scaling_start: int) -> int:
        """How many halvings of row l still land on a threshold <= alpha N, as a power of two."""
        m = 1
        if ell >= scaling_start:
            while 2 * m * ell <= self.reach:
                m *= 2
        return m


def search_weights(D, alpha, tail: TailRule, grid: int = _GRID, N: Optional[int] = None,
                   L_exp: int = 2) -> Optional[WeightTable]:
    """
    Look for weights in the given tail class by maximising a slack s in
    S(l) - s/l >= sum_d sigma_d min(1/d, alpha/l). The LP solution is floored
    onto a dyadic grid and re-verified exactly; None if nothing verifies.

    With N given, the rows also hold back the ledger margins of the finite
    criterion at that N and the result must pass check_finite_crit. The
    support found by the asymptotic solve is shrunk between rounds.
    """
    alpha = to_fraction(alpha)
    table = _as_table(D)
    downset = table.downset
    profile = _DensityProfile(table)
    kind = TailKind(tail.kind)
    if kind == TailKind.none:
        raise DomainError("the search needs a tail rule")
    if N is not None and (N < 1 or L_exp < 0):
        raise DomainError("N >= 1 and L >= 0 required")
    if kind == TailKind.power2:
        needed, allowed = power2_tail_capacity(table, alpha, tail.start)
        if allowed <= needed:
            logger.info("[REARRANGE] search alpha=%s power2 r0=%d: tail needs c > %.6g, nu_2 allows %.6g",
                        alpha, tail.start, needed, allowed)
            return None
    started = time.time()
    allowed_primes = set(downset.primes)
    first = TailRule(kind, Fraction(0), tail.start).first_index
    # a_1 enters no row
    indices = [l for l in range(2, first) if set(_prime_factors(l)) <= allowed_primes]
    position = {l: col for col, l in enumerate(indices)}
    c_col = len(indices) if kind == TailKind.power2 else None
    n_vars = len(indices) + (1 if c_col is not None else 0) + 1
    slack_col = n_vars - 1

    def shape(active) -> WeightTable:
        explicit = {indices[col]: Fraction(1) for col in active if col != c_col}
        c = Fraction(1) if c_col in active else Fraction(0)
        return WeightTable(downset.elements, explicit, TailRule(kind, c, tail.start))

    L = shape(range(n_vars - 1)).scaling_start(alpha)

    def tail_coeffs(ell: int) -> np.ndarray:
        row = np.zeros(n_vars)
        for col, l in enumerate(indices):
            row[col] = 1.0 if l > ell else 0.0
            if kind == TailKind.halving and 2 * l >= first:
                j = 1
                while (l << j) <= ell:
                    j += 1
                row[col] += 2.0 / (1 << j)
        if c_col is not None:
            r = max(tail.start, ell.bit_length())
            row[c_col] = 2.0 / (1 << r)
        return row

    def solve(active, reserve: Optional[_FiniteReserve]):
        rows, bounds = [], []
        for p in downset.primes:
            row = np.zeros(n_vars)
            for col, l in enumerate(indices):
                row[col] = valuation(l, p)
                if kind == TailKind.halving and 2 * l >= first:
                    row[col] += valuation(l, p) + (2 if p == 2 else 0)
            if c_col is not None and p == 2:
                row[c_col] = 2.0 * (tail.start + 1) / first
            rows.append(row)
            held = reserve.prime[p] if reserve else 0
            bounds.append(float(profile.prime_rhs(p) - held) - _LP_MARGIN)
        truncation = tail_coeffs(reserve.cutoff - 1) if reserve else None
        for ell in range(1, 2 * L):
            row = -tail_coeffs(ell)
            row[slack_col] = 1.0 / ell
            rhs = profile.threshold_rhs(ell, alpha)
            if reserve:
                m = reserve.multiplier(ell, L)
                row += m * truncation
                rhs += m * reserve.deviation
            rows.append(row)
            bounds.append(-float(rhs) - _LP_MARGIN)
        A_ub = sparse.csr_matrix(np.vstack(rows))
        cost = np.zeros(n_vars)
        cost[slack_col] = -1.0
        var_bounds = [(0, None) if col in active else (0, 0) for col in range(n_vars - 1)] + [(None, 1)]
        res = linprog(cost, A_ub=A_ub, b_ub=np.array(bounds), bounds=var_bounds, method="highs")
        if res.status != 0 or -res.fun <= 0:
            return None, res
        return np.clip(res.x, 0, None), res

    def to_table(x: np.ndarray) -> WeightTable:
        explicit = {l: Fraction(int(math.floor(x[col] * grid)), grid) for col, l in enumerate(indices)}
        c = Fraction(int(math.floor(x[c_col] * grid)), grid) if c_col is not None else Fraction(0)
        return WeightTable(downset.elements, explicit, TailRule(kind, c, tail.start))

    def support_of(weights: WeightTable) -> frozenset:
        cols = {position[l] for l in weights.explicit}
        if c_col is not None and weights.tail.c > 0:
            cols.add(c_col)
        return frozenset(cols)

    x, res = solve(frozenset(range(n_vars - 1)), None)
    if x is None:
        logger.info("[REARRANGE] search alpha=%s tail=%s: no positive slack (status %d)",
                    alpha, kind.value, res.status)
        return None
    weights = to_table(x)
    if N is None:
        report = check_asym_crit(table, alpha, weights)
        logger.info("[REARRANGE] search alpha=%s tail=%s slack=%.3g verified=%s (%.2fs)",
                    alpha, kind.value, -res.fun, report.passed, time.time() - started)
        return weights if report.passed else None

    dev = {d: max_deviation(d, table) for d in downset}
    deviation = sum(dev.values(), Fraction(0)) / N
    cutoff = (1 << L_exp) * N

    def reserve_for(active) -> _FiniteReserve:
        support = [l for l, _ in shape(active).support(cutoff - 1)]
        increases = _ceiling_increase(support, downset.primes, N, L_exp)
        prime = {p: increases[p] + sum((valuation(d, p) * dev[d] for d in downset if d % p == 0), Fraction(0)) / N
                 for p in downset.primes}
        return _FiniteReserve(prime, deviation, cutoff, alpha * N)

    active = support_of(weights)
    for round_number in range(1, _SEARCH_ROUNDS + 1):
        x, res = solve(active, reserve_for(active))
        if x is None:
            logger.info("[REARRANGE] search alpha=%s N=%d round %d: no positive slack after reserves (status %d)",
                        alpha, N, round_number, res.status)
            return None
        weights = to_table(x)
        report = check_finite_crit(table, alpha, N, weights, L_exp)
        logger.info("[REARRANGE] search alpha=%s N=%d round %d slack=%.3g verified=%s (%.2fs)",
                    alpha, N, round_number, -res.fun, report.passed, time.time() - started)
        if report.passed:
            return weights
        shrunk = support_of(weights)
        if shrunk == active:
            break
        active = shrunk
    return None


# ---------------------------------------------------------------------------
# t_{2,3}(N)
# ---------------------------------------------------------------------------

def _pareto_options(q: int) -> List[Tuple[int, int]]:
    """(i, j) with 2^i 3^j >= q, minimal in both exponents."""
    out = []
    j, p3 = 0, 1
    while True:
        i = 0
        while (p3 << i) < q:
            i += 1
        if not out or i < out[-1][0]:
            out.append((i, j))
        if i == 0:
            return out
        j, p3 = j + 1, p3 * 3


def t23_groups(N: int, t: int) -> Dict[int, int]:
    """For each q >= 2: how many n <= N have 3-rough part m with ceil(t/m) = q."""
    smooth = smooth_numbers(N)
    groups: Dict[int, int] = {}
    for m in range(1, min(N, t - 1) + 1):
        if m % 2 == 0 or m % 3 == 0:
            continue
        q = -(-t // m)
        groups[q] = groups.get(q, 0) + bisect.bisect_right(smooth, N // m)
    return groups


def t23_feasible(N: int, t: int) -> bool:
    """Can every n <= N be made >= t by swapping its 3-smooth part within the 2,3 budget of N!?"""
    if t <= 1:
        return True
    groups = t23_groups(N, t)
    budget2, budget3 = legendre_valuation(N, 2), legendre_valuation(N, 3)
    columns: List[Tuple[int, int, int]] = []
    for q in sorted(groups):
        columns += [(q, i, j) for i, j in _pareto_options(q)]
    qs = sorted(groups)
    index = {q: k for k, q in enumerate(qs)}
    n = len(columns)
    rows = sparse.lil_matrix((len(qs) + 2, n))
    for col, (q, i, j) in enumerate(columns):
        rows[index[q], col] = 1
        rows[len(qs), col] = i
        rows[len(qs) + 1, col] = j
    lower = np.array([groups[q] for q in qs] + [-np.inf, -np.inf], dtype=float)
    upper = np.array([groups[q] for q in qs] + [budget2, budget3], dtype=float)
    cost = np.array([i for _, i, _ in columns], dtype=float)
    res = milp(cost, integrality=np.ones(n), bounds=Bounds(0, np.inf),
               constraints=LinearConstraint(rows.tocsr(), lower, upper))
    if res.status == 2:
        return False
    if res.status != 0 or res.x is None:
        raise VerificationError(f"t23 milp at N={N} t={t} ended with status {res.status}: {res.message}")
    x = np.rint(res.x).astype(np.int64)
    used2 = sum(int(x[c]) * columns[c][1] for c in range(n))
    used3 = sum(int(x[c]) * columns[c][2] for c in range(n))
    placed: Dict[int, int] = {}
    for c, (q, _, _) in enumerate(columns):
        placed[q] = placed.get(q, 0) + int(x[c])
    if used2 > budget2 or used3 > budget3 or placed != groups or (x < 0).any():
        raise VerificationError(f"t23 milp solution at N={N} t={t} fails the exact check")
    return True


def _largest_feasible(N: int, feasible) -> int:
    lo, hi = 1, N + 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if feasible(N, mid):
            lo = mid
        else:
            hi = mid
    return lo


def t23_exact(N: int, ceiling: Optional[int] = None) -> int:
    """Largest t reachable by rearranging only the powers of 2 and 3 in {1..N}."""
    ceiling = ceiling or get_settings()["t23_ceiling"]
    if N < 1:
        raise DomainError("N >= 1 required")
    if N > ceiling:
        raise ResourceLimitError(f"N={N} exceeds the t23 ceiling {ceiling}")
    started = time.time()
    t = _largest_feasible(N, t23_feasible)
    logger.info("[T23] N=%d t23=%d (%.2fs)", N, t, time.time() - started)
    return t


def _dp_feasible(N: int, t: int) -> bool:
    if t <= 1:
        return True
    budget2, budget3 = legendre_valuation(N, 2), legendre_valuation(N, 3)
    inf = np.iinfo(np.int64).max // 4
    best = np.full(budget3 + 1, inf, dtype=np.int64)
    best[0] = 0
    for q, count in sorted(t23_groups(N, t).items()):
        options = _pareto_options(q)
        for _ in range(count):
            new = np.full_like(best, inf)
            for i, j in options:
                if j <= budget3:
                    np.minimum(new[j:], best[:budget3 + 1 - j] + i, out=new[j:])
            best = new
            if best.min() > budget2:
                return False
    return int(best.min()) <= budget2


def t23_dp(N: int) -> int:
    """Dynamic-programming cross-check of t23_exact: minimal 2-usage per 3-usage."""
    if N > _DP_CEILING:
        raise ResourceLimitError(f"t23_dp is limited to N <= {_DP_CEILING}")
    return _largest_feasible(N, _dp_feasible)


def t23_scan(N_values: Sequence[int], threads: Optional[int] = None) -> List[dict]:
    values = parallel_map(t23_exact, N_values, threads)
    return [{"N": N, "t23": t, "ratio": t / N} for N, t in zip(N_values, values)]


# ---------------------------------------------------------------------------
# The 1/4 certificate
# ---------------------------------------------------------------------------

@dataclass
class QuarterReport:
    epsilon: Fraction
    C: Fraction
    threshold: int
    weights: int
    checked: int
    failures: List[str] = field(default_factory=list)
    mismatches: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures and not self.mismatches

    def to_json(self) -> dict:
        return {
            "epsilon": fraction_str(self.epsilon),
            "C": fraction_str(self.C),
            "threshold": self.threshold,
            "weights": self.weights,
            "checked": self.checked,
            "passed": self.passed,
            "failures": self.failures,
            "mismatches": self.mismatches,
        }


def quarter_weights() -> Dict[int, Fraction]:
    top = (1 << QUARTER_MAX_NU2) * 3 ** QUARTER_MAX_NU3
    weights = {1: QUARTER_W1}
    for ell in smooth_numbers(top):
        if ell > 1 and valuation(ell, 2) <= QUARTER_MAX_NU2:
            weights[ell] = QUARTER_W
    return weights


def quarter_certificate_check(c2: Fraction = QUARTER_C2, c3: Fraction = QUARTER_C3,
                              weights: Optional[Dict[int, Fraction]] = None) -> QuarterReport:
    """
    Check c2 nu_2(l) + c3 nu_3(l) + sum_{l' >= l} w_l' >= 1 for every 3-smooth l
    (a factor multiplied by k <= l already has its 3-rough part above N/4l)
    and recompute epsilon, C and the threshold ceil(C/epsilon).
    """
    weights = quarter_weights() if weights is None else weights
    smooth = smooth_numbers(4 * max(weights))
    epsilon = 1 - c2 - c3 / 2
    C = Fraction(0)
    for ell, w in weights.items():
        below = [d for d in smooth if d < 4 * ell]
        epsilon -= w * sum((Fraction(1, d) - Fraction(1, 4 * ell) for d in below), Fraction(0))
        C += w * (Fraction(4, 3) * len(below) + 1)

    keys = sorted(weights)
    suffix = [Fraction(0)] * (len(keys) + 1)
    for i in range(len(keys) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + weights[keys[i]]
    failures, checked = [], 0
    # beyond these exponents the c2 or c3 term alone reaches 1
    for a in range(math.ceil(1 / c2) if c2 else 64):
        for b in range(math.ceil(1 / c3) if c3 else 64):
            ell = (1 << a) * 3 ** b
            lhs = c2 * a + c3 * b + suffix[bisect.bisect_left(keys, ell)]
            checked += 1
            if lhs < 1:
                failures.append(f"l=2^{a}*3^{b}: {lhs} < 1")
    threshold = math.ceil(C / epsilon) if epsilon > 0 else 0
    if epsilon <= 0:
        failures.append(f"epsilon={epsilon} is not positive")
    mismatches = [name for name, got, want in (("epsilon", epsilon, QUARTER_EPSILON), ("C", C, QUARTER_C),
                                               ("threshold", threshold, QUARTER_THRESHOLD)) if got != want]
    logger.info("[REARRANGE] quarter certificate eps=%s C=%s threshold=%d failures=%d",
                epsilon, C, threshold, len(failures))
    return QuarterReport(epsilon, C, threshold, len(weights), checked, failures, mismatches)
