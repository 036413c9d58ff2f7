"""
Number theory primitives: sieves, factorial valuations, Stirling enclosures,
3-rough counts, 3-smooth ceilings, the kappa table and explicit prime-counting
bounds for sums over primes.
"""
import bisect
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.egs.errors import DomainError, ResourceLimitError
from src.egs.interval import (
    RationalInterval,
    as_interval,
    log_enclosure,
    log_int,
    pi_enclosure,
    sqrt_enclosure,
    to_fraction,
    default_bits,
)
from src.services.settings import get_settings
from src.utils.constants import (
    E_LINEAR_COEFF,
    E_SQRT_COEFF,
    KAPPA_ROWS,
    PI_LOWER_THRESHOLD,
    PI_UPPER_COEFF,
    PRIME_SUM_MIN_Y,
)

logger = logging.getLogger(__name__)

_SEGMENT = 1 << 22


# ---------------------------------------------------------------------------
# Sieves
# ---------------------------------------------------------------------------

def simple_sieve(limit: int) -> np.ndarray:
    if limit < 2:
        return np.array([], dtype=np.int64)
    is_prime = np.ones(limit + 1, dtype=bool)
    is_prime[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if is_prime[p]:
            is_prime[p * p: limit + 1: p] = False
    return np.flatnonzero(is_prime).astype(np.int64)


def segmented_sieve(limit: int, segment: int = _SEGMENT) -> np.ndarray:
    """All primes <= limit, sieving odd numbers segment by segment."""
    if limit <= segment:
        return simple_sieve(limit)
    base = simple_sieve(math.isqrt(limit) + 1)
    chunks = [simple_sieve(segment)]
    low = segment + 1
    if low % 2 == 0:
        low += 1
    while low <= limit:
        high = min(low + 2 * segment, limit + 1)
        odd_count = (high - low + 1) // 2
        mask = np.ones(odd_count, dtype=bool)
        for p in base[1:]:
            p = int(p)
            if p * p >= high:
                break
            start = max(p * p, ((low + p - 1) // p) * p)
            if start % 2 == 0:
                start += p
            if start >= high:
                continue
            mask[(start - low) // 2:: p] = False
        idx = np.flatnonzero(mask)
        chunks.append((low + 2 * idx).astype(np.int64))
        low = high if high % 2 == 1 else high + 1
    primes = np.concatenate(chunks)
    return primes[primes <= limit]


@dataclass(frozen=True)
class PrimeTable:
    limit: int
    primes: np.ndarray = field(repr=False)

    def pi(self, x) -> int:
        """Exact prime count up to x (x may be any real <= limit)."""
        xf = math.floor(to_fraction(x)) if not isinstance(x, int) else x
        if xf > self.limit:
            raise DomainError(f"pi({xf}) requested beyond sieve limit {self.limit}")
        return int(np.searchsorted(self.primes, xf, side="right"))

    def count_range(self, lo, hi) -> int:
        """Number of primes p with lo < p <= hi."""
        return self.pi(hi) - self.pi(lo)

    def primes_in(self, lo, hi) -> np.ndarray:
        """Primes p with lo < p <= hi."""
        lo_i = math.floor(to_fraction(lo)) if not isinstance(lo, int) else lo
        hi_i = math.floor(to_fraction(hi)) if not isinstance(hi, int) else hi
        a = np.searchsorted(self.primes, lo_i, side="right")
        b = np.searchsorted(self.primes, hi_i, side="right")
        return self.primes[a:b]

    def is_prime(self, n: int) -> bool:
        if n > self.limit:
            raise DomainError(f"{n} is beyond sieve limit {self.limit}")
        i = np.searchsorted(self.primes, n)
        return bool(i < len(self.primes) and self.primes[i] == n)

    def self_check(self, samples: int = 32) -> bool:
        """Trial-divide evenly spaced entries."""
        if len(self.primes) == 0:
            return True
        if np.any(np.diff(self.primes) <= 0):
            return False
        for i in np.linspace(0, len(self.primes) - 1, min(samples, len(self.primes))).astype(int):
            p = int(self.primes[i])
            if p < 2 or any(p % d == 0 for d in range(2, math.isqrt(p) + 1)):
                return False
        return True

    def __len__(self) -> int:
        return len(self.primes)


def sieve_primes(limit: int) -> PrimeTable:
    if limit < 2:
        raise DomainError("sieve limit must be at least 2")
    ceiling = get_settings()["sieve_limit"]
    if limit > ceiling:
        raise ResourceLimitError(
            f"sieve limit {limit} exceeds configured ceiling {ceiling} (set EGS_SIEVE_LIMIT)"
        )
    return _cached_table(int(limit))


@lru_cache(maxsize=8)
def _cached_table(limit: int) -> PrimeTable:
    logger.debug("[SIEVE] primes up to %d", limit)
    return PrimeTable(limit=limit, primes=segmented_sieve(limit))


@lru_cache(maxsize=4)
def smallest_prime_factors(limit: int) -> np.ndarray:
    """spf[n] for 0 <= n <= limit (spf[0] = spf[1] = 0)."""
    spf = np.zeros(limit + 1, dtype=np.int64)
    for p in simple_sieve(math.isqrt(limit) + 1):
        p = int(p)
        block = spf[p * p:: p]
        block[block == 0] = p
    unset = np.flatnonzero(spf == 0)
    spf[unset] = unset
    spf[:2] = 0
    return spf


@lru_cache(maxsize=4)
def largest_prime_factors(limit: int) -> np.ndarray:
    """lpf[n] for 0 <= n <= limit (lpf[1] = 1)."""
    lpf = np.ones(limit + 1, dtype=np.int64)
    lpf[0] = 0
    for p in simple_sieve(limit):
        lpf[int(p):: int(p)] = p
    return lpf


def factorize(n: int, spf: Optional[np.ndarray] = None) -> Dict[int, int]:
    """Prime factorization as {p: exponent}."""
    if n < 1:
        raise DomainError(f"cannot factor {n}")
    if spf is not None and n < len(spf):
        out: Dict[int, int] = {}
        while n > 1:
            p = int(spf[n])
            out[p] = out.get(p, 0) + 1
            n //= p
        return out
    return dict(_trial_factor(n))


@lru_cache(maxsize=1 << 16)
def _trial_factor(n: int) -> Tuple[Tuple[int, int], ...]:
    out = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            e = 0
            while n % d == 0:
                n //= d
                e += 1
            out.append((d, e))
        d += 1 if d == 2 else 2
    if n > 1:
        out.append((n, 1))
    return tuple(out)


def valuation(n: int, p: int) -> int:
    e = 0
    while n % p == 0:
        n //= p
        e += 1
    return e


def is_smooth(n: int, bound: int) -> bool:
    if n < 1:
        return False
    return all(p <= bound for p in factorize(n))


# ---------------------------------------------------------------------------
# Factorial valuations and Stirling
# ---------------------------------------------------------------------------

def legendre_valuation(N: int, p: int) -> int:
    total, q = 0, p
    while q <= N:
        total += N // q
        q *= p
    return total


def digit_sum(N: int, p: int) -> int:
    s = 0
    while N:
        s += N % p
        N //= p
    return s


def legendre_digit_form(N: int, p: int) -> int:
    return (N - digit_sum(N, p)) // (p - 1)


def legendre_valuations(N: int, primes: np.ndarray) -> np.ndarray:
    """Vectorised nu_p(N!) for an array of primes."""
    primes = np.asarray(primes, dtype=np.int64)
    val = np.zeros(len(primes), dtype=np.int64)
    pk = primes.copy()
    active = pk <= N
    while active.any():
        val[active] += N // pk[active]
        pk[active] *= primes[active]
        active &= pk <= N
    return val


@dataclass(frozen=True)
class FactorialValuation:
    N: int
    primes: np.ndarray = field(repr=False)
    valuations: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, N: int, table: Optional[PrimeTable] = None) -> "FactorialValuation":
        table = table or sieve_primes(max(N, 2))
        primes = table.primes_in(1, N)
        return cls(N=N, primes=primes, valuations=legendre_valuations(N, primes))

    def valuation(self, p: int) -> int:
        i = np.searchsorted(self.primes, p)
        if i < len(self.primes) and self.primes[i] == p:
            return int(self.valuations[i])
        return 0

    def as_dict(self) -> Dict[int, int]:
        return {int(p): int(v) for p, v in zip(self.primes, self.valuations)}

    def log_enclosure(self, bits: int = None) -> RationalInterval:
        bits = bits or default_bits()
        total = RationalInterval.point(0)
        for p, v in zip(self.primes.tolist(), self.valuations.tolist()):
            total = total + log_int(p, bits) * v
        return total


def factorial_log_bounds(N: int, bits: int = None) -> RationalInterval:
    """Stirling: N log N - N + log sqrt(2 pi N) <= log N! <= same + 1/(12N)."""
    if N < 1:
        raise DomainError("N must be positive")
    bits = (bits or default_bits()) + 2 * N.bit_length()
    base = (
        log_int(N, bits) * N
        - N
        + (pi_enclosure(bits) * (2 * N)).log(bits) / 2
    )
    return RationalInterval(base.lo, base.hi + Fraction(1, 12 * N))


def log_factorial_per_n(N, bits: int = None) -> RationalInterval:
    """Enclosure of log(N!)/N, accurate for astronomically large N."""
    N = to_fraction(N)
    bits = bits or default_bits()
    logn = log_enclosure(N, bits)
    base = logn - 1 + (pi_enclosure(bits) * 2 * N).log(bits) / (2 * N)
    return RationalInterval(base.lo, base.hi + 1 / (12 * N * N))


# ---------------------------------------------------------------------------
# 3-rough and 3-smooth numbers
# ---------------------------------------------------------------------------

def _coprime6_upto(x: int) -> int:
    if x <= 0:
        return 0
    q, r = divmod(x, 6)
    return 2 * q + (1 if r >= 1 else 0) + (1 if r >= 5 else 0)


def rough_count(a, b) -> int:
    """Integers in (a, b] coprime to 6."""
    a, b = to_fraction(a), to_fraction(b)
    if a < 0 or a > b:
        raise DomainError(f"rough_count needs 0 <= a <= b, got ({a}, {b})")
    return _coprime6_upto(math.floor(b)) - _coprime6_upto(math.floor(a))


@dataclass(frozen=True)
class SmoothDecomposition:
    value: int
    n: int
    m: int
    anchor_a: int = 0

    def __post_init__(self):
        if self.value != 2 ** self.n * 3 ** self.m:
            raise DomainError(f"{self.value} != 2^{self.n} 3^{self.m}")


def smooth_numbers(limit: int) -> List[int]:
    """Sorted 3-smooth numbers <= limit."""
    out = []
    p3 = 1
    while p3 <= limit:
        v = p3
        while v <= limit:
            out.append(v)
            v *= 2
        p3 *= 3
    out.sort()
    return out


def _plain_smooth_ceiling(x: Fraction) -> Tuple[int, int, int]:
    best = None
    m, p3 = 0, 1
    while True:
        q = x / p3
        n = 0 if q <= 1 else (math.ceil(q) - 1).bit_length()
        value = p3 << n
        if best is None or value < best[0]:
            best = (value, n, m)
        if p3 >= x:
            break
        m += 1
        p3 *= 3
    return best


def smooth_ceiling(x, anchor_L=None) -> SmoothDecomposition:
    """Least 3-smooth number >= x, optionally anchored at 12^a with 12^a <= x/L."""
    x = to_fraction(x)
    if x < 1:
        raise DomainError(f"smooth_ceiling needs x >= 1, got {x}")
    if anchor_L is None:
        value, n, m = _plain_smooth_ceiling(x)
        return SmoothDecomposition(value, n, m)
    L = to_fraction(anchor_L)
    if not 1 <= L <= x:
        raise DomainError(f"anchored smooth_ceiling needs 1 <= L <= x, got L={L}")
    a = 0
    while 12 ** (a + 1) * L <= x:
        a += 1
    value, n, m = _plain_smooth_ceiling(x / 12 ** a)
    return SmoothDecomposition(value * 12 ** a, n + 2 * a, m + a, a)


class KappaMode(str, Enum):
    table = "table"
    scan = "scan"


@dataclass(frozen=True)
class KappaRow:
    n1: int
    m1: int
    n2: int
    m2: int

    @property
    def L(self) -> Fraction:
        return Fraction(min(2 ** (self.n1 + self.n2), 3 ** (self.m1 + self.m2)), 6)

    @property
    def ratio(self) -> Fraction:
        return max(Fraction(3 ** self.m1, 2 ** self.n1), Fraction(2 ** self.n2, 3 ** self.m2))


KAPPA_TABLE = [KappaRow(*row) for row in KAPPA_ROWS]


def kappa_row(L) -> KappaRow:
    L = to_fraction(L)
    usable = [row for row in KAPPA_TABLE if row.L <= L]
    if not usable:
        rows = ", ".join(str(row.L) for row in KAPPA_TABLE)
        raise DomainError(f"L={L} is below every table row (available L: {rows})")
    return max(usable, key=lambda row: row.L)


def kappa_bound(L, mode: KappaMode = KappaMode.table, scan_limit=None,
                bits: int = None) -> RationalInterval:
    """Table mode: certified upper bound on kappa_L. Scan mode: empirical lower bound."""
    L = to_fraction(L)
    if KappaMode(mode) == KappaMode.table:
        return log_enclosure(kappa_row(L).ratio, bits)
    if scan_limit is None:
        raise DomainError("scan mode needs scan_limit")
    return log_enclosure(kappa_scan_ratio(L, scan_limit), bits)


def kappa_scan_ratio(L, scan_limit) -> Fraction:
    """sup of ceil_smooth(x)/x over L <= x <= scan_limit."""
    L, limit = to_fraction(L), to_fraction(scan_limit)
    smooth = smooth_numbers(2 * math.ceil(limit) + 2)
    first = smooth_ceiling(max(L, 1)).value
    best = Fraction(first) / L if L >= 1 else Fraction(first)
    i = bisect.bisect_left(smooth, first)
    while i + 1 < len(smooth) and smooth[i] < limit:
        best = max(best, Fraction(smooth[i + 1], smooth[i]))
        i += 1
    return best


def kappa_interval(L, scan_limit, bits: int = None) -> RationalInterval:
    """[scan lower bound, table upper bound] for kappa_L."""
    lo = kappa_bound(L, KappaMode.scan, scan_limit, bits)
    hi = kappa_bound(L, KappaMode.table, bits=bits)
    return RationalInterval(lo.lo, hi.hi)


# ---------------------------------------------------------------------------
# Explicit prime counting
# ---------------------------------------------------------------------------

def error_majorant(x, bits: int = None) -> Fraction:
    """Upper enclosure of E(x) = 0.95 sqrt(x) + 3.83e-9 x."""
    x = to_fraction(x)
    return (sqrt_enclosure(x, bits) * E_SQRT_COEFF + E_LINEAR_COEFF * x).hi


@lru_cache(maxsize=1)
def _small_table() -> PrimeTable:
    return PrimeTable(limit=PI_LOWER_THRESHOLD, primes=simple_sieve(PI_LOWER_THRESHOLD))


def pi_bounds(x, bits: int = None) -> RationalInterval:
    """Interval containing pi(x) for real x > 1."""
    x = to_fraction(x)
    if x <= 1:
        raise DomainError("pi_bounds needs x > 1")
    logx = log_enclosure(x, bits)
    upper = (x / logx + PI_UPPER_COEFF * x / (logx * logx)).hi
    if x < PI_LOWER_THRESHOLD:
        exact = _small_table().pi(x)
        return RationalInterval(exact, max(Fraction(exact), upper))
    lower = (x / logx + x / (logx * logx)).lo
    return RationalInterval(lower, upper)


def prime_count_range_bounds(y, x, bits: int = None) -> RationalInterval:
    """Interval containing pi(x) - pi(y) for 1423 <= y <= x."""
    y, x = to_fraction(y), to_fraction(x)
    _check_prime_sum_range(y, x)
    if x == y:
        return RationalInterval.point(0)
    logy, logx = log_enclosure(y, bits), log_enclosure(x, bits)
    err = 2 * error_majorant(x, bits) / logy
    upper = (x - y) / (2 * logy) + (x - y) / (2 * logx) + err
    shrink = 1 - 2 / sqrt_enclosure(y, bits)
    lower = shrink * (x - y) / log_enclosure((x + y) / 2, bits) - err
    return RationalInterval(max(Fraction(0), lower.lo), upper.hi)


def _check_prime_sum_range(y: Fraction, x: Fraction):
    if y < PRIME_SUM_MIN_Y:
        raise DomainError(f"y={y} is below {PRIME_SUM_MIN_Y}; sum the small primes exactly")
    if x < y:
        raise DomainError(f"empty range ({y}, {x}]")


@dataclass(frozen=True)
class StepPiece:
    """A monotone piece of b on (left, right]: start = b(left+), end = b(right)."""
    left: Fraction
    right: Fraction
    start: RationalInterval
    end: RationalInterval
    integral: RationalInterval

    @property
    def variation(self) -> Fraction:
        return _abs_diff_upper(self.start, self.end)


def _abs_diff_upper(a: RationalInterval, b: RationalInterval) -> Fraction:
    return max(abs(a.hi - b.lo), abs(b.hi - a.lo))


@dataclass(frozen=True)
class StepFunctionDescriptor:
    pieces: Tuple[StepPiece, ...]

    def __post_init__(self):
        for prev, cur in zip(self.pieces, self.pieces[1:]):
            if prev.right != cur.left:
                raise DomainError("pieces must tile a contiguous range")

    @property
    def breakpoints(self) -> List[Fraction]:
        return [self.pieces[0].left] + [p.right for p in self.pieces]

    @classmethod
    def constant(cls, y, x, value=1) -> "StepFunctionDescriptor":
        y, x, v = to_fraction(y), to_fraction(x), as_interval(value)
        return cls((StepPiece(y, x, v, v, v * (x - y)),))

    def integral(self) -> RationalInterval:
        total = RationalInterval.point(0)
        for p in self.pieces:
            total = total + p.integral
        return total

    def tv_star(self) -> Fraction:
        """Upper bound on |b(y+)| + |b(x)| + total variation on (y, x]."""
        if not self.pieces:
            return Fraction(0)
        first, last = self.pieces[0].start, self.pieces[-1].end
        total = max(abs(first.lo), abs(first.hi)) + max(abs(last.lo), abs(last.hi))
        for p in self.pieces:
            total += p.variation
        for prev, cur in zip(self.pieces, self.pieces[1:]):
            total += _abs_diff_upper(prev.end, cur.start)
        return total

    def is_nonnegative(self) -> bool:
        return all(p.start.lo >= 0 and p.end.lo >= 0 for p in self.pieces)


class PrimeWeight(str, Enum):
    unit = "unit"
    logp = "logp"


class Direction(str, Enum):
    upper = "upper"
    lower = "lower"


def prime_sum_bounds(y, x, b: StepFunctionDescriptor, weight: PrimeWeight = PrimeWeight.unit,
                     direction: Direction = Direction.upper, bits: int = None) -> Fraction:
    """
    One-sided bound on the sum of b(p) (or b(p) log p) over primes y < p <= x.

    Args:
        y, x: range endpoints with 1423 <= y <= x
        b: non-negative piecewise-monotone function described by its pieces
        weight: unit or logp
        direction: which side of the sum to bound

    Returns:
        Fraction: the requested bound
    """
    y, x = to_fraction(y), to_fraction(x)
    _check_prime_sum_range(y, x)
    weight, direction = PrimeWeight(weight), Direction(direction)
    if not b.pieces or x == y:
        return Fraction(0)
    if not b.is_nonnegative():
        raise DomainError("prime_sum_bounds needs a non-negative b")
    integral = b.integral()
    if integral.hi == 0 and b.tv_star() == 0:
        return Fraction(0)
    err = b.tv_star() * error_majorant(x, bits)
    shrink = 1 - 2 / sqrt_enclosure(y, bits)
    if weight == PrimeWeight.logp:
        if direction == Direction.upper:
            return (integral + err).hi
        return (shrink * integral - err).lo
    if direction == Direction.upper:
        return ((integral + err) / log_enclosure(y, bits)).hi
    return ((shrink * integral - err) / log_enclosure(x, bits)).lo
