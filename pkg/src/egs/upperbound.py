"""
Analytic upper bounds on t(N).

With weights w_p = log p / log t for small p and 1 - log ceil(t/p) / log t
above t/floor(sqrt t), the dual criterion reduces to

    sum over t/floor(sqrt t) < p <= N of f_{N/t}(p/N) > log N! - N log t  =>  t(N) < t,

where f_a(x) = floor(1/x) log(ceil(1/(a x)) a x). Everything reported as
"true" is decided on rigorous interval enclosures.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.egs.errors import DomainError
from src.egs.interval import (
    RationalInterval,
    as_interval,
    ceil_interval,
    default_bits,
    e_enclosure,
    floor_interval,
    log2_enclosure,
    log_enclosure,
    log_int,
    pi_enclosure,
    sqrt_enclosure,
    to_fraction,
)
from src.egs.ntheory import (
    Direction,
    PrimeTable,
    PrimeWeight,
    StepFunctionDescriptor,
    StepPiece,
    error_majorant,
    factorial_log_bounds,
    prime_sum_bounds,
    sieve_primes,
)
from src.services.settings import get_settings
from src.utils.constants import PRIME_SUM_MIN_Y

logger = logging.getLogger(__name__)

Number = Union[int, Fraction, RationalInterval]

_LOG_SCALE_BITS = 40
_SEGMENT_RATIO = Fraction(9, 8)
_MAX_PIECES = 4096
TNE_RANGE = (80, 5000)


class UpperMode(str, Enum):
    exact_sieve = "exact-sieve"
    analytic = "analytic"


def f_alpha(alpha: Number, x: Number, bits: int = None) -> RationalInterval:
    """
    Enclosure of f_alpha(x) = floor(1/x) log(ceil(1/(alpha x)) alpha x).

    alpha may be an interval (e.g. an enclosure of e); the result is exactly 0
    when 1/(alpha x) is an integer.
    """
    x = to_fraction(x)
    a = alpha if isinstance(alpha, RationalInterval) else as_interval(alpha)
    if x <= 0 or a.lo <= 0:
        raise DomainError("f_alpha needs alpha > 0 and x > 0")
    n = math.floor(1 / x)
    if n == 0:
        return RationalInterval.point(0)
    ax = a * x
    inv = 1 / ax
    c_lo, c_hi = math.ceil(inv.lo), math.ceil(inv.hi)
    if c_lo == c_hi:
        arg = ax * c_lo
        if arg.lo == arg.hi == 1:
            return RationalInterval.point(0)
        value = arg.log(bits) * n
        return RationalInterval(max(Fraction(0), value.lo), value.hi)
    # 1/(alpha x) straddles an integer: f jumps between 0 and its left limit there
    top = (ax * c_hi).log(bits).hi * n
    return RationalInterval(Fraction(0), max(Fraction(0), top))


# ---------------------------------------------------------------------------
# Exact-sieve evaluation
# ---------------------------------------------------------------------------

def crit_threshold(t: int) -> Fraction:
    """Primes strictly above t / floor(sqrt t) take the reduced weight."""
    return Fraction(t, math.isqrt(t))


@lru_cache(maxsize=16)
def _weighted_log_total(N: int, bits: int) -> RationalInterval:
    """Sum over p <= N of floor(N/p) log p."""
    table = sieve_primes(max(N, 2))
    total = RationalInterval.point(0)
    for p in table.primes_in(1, N).tolist():
        total = total + log_int(p, bits) * (N // p)
    return total


def crit_margin(N: int, t: int, table: Optional[PrimeTable] = None, bits: int = None) -> RationalInterval:
    """
    Enclosure of  sum f_{N/t}(p/N) - (log N! - N log t)  over t/floor(sqrt t) < p <= N.

    The sum is regrouped as sum_c K_c log c + sum floor(N/p) log p - B log t,
    with K_c the floor(N/p) mass of primes having ceil(t/p) = c and B the total
    mass, so only about sqrt(t) distinct logarithms are needed per t.
    """
    if not 2 <= t <= N:
        raise DomainError(f"need 2 <= t <= N (N={N}, t={t})")
    bits = bits or default_bits()
    table = table or sieve_primes(max(N, 2))
    y = crit_threshold(t)
    primes = table.primes_in(math.floor(y), N)
    if len(primes) == 0:
        return RationalInterval.point(0) - factorial_log_bounds(N, bits) + log_int(t, bits) * N
    n = N // primes
    c = -(-t // primes)
    K = np.bincount(c, weights=n).astype(np.int64)
    total = _weighted_log_total(N, bits)
    for p in table.primes_in(1, math.floor(y)).tolist():
        total = total - log_int(p, bits) * (N // p)
    for cval in np.flatnonzero(K).tolist():
        if cval > 1:
            total = total + log_int(cval, bits) * int(K[cval])
    B = int(n.sum())
    total = total + log_int(t, bits) * (N - B)
    return total - factorial_log_bounds(N, bits)


def _margin_float(N: int, t: int, primes: np.ndarray, lgamma_n: float) -> float:
    y = t / math.isqrt(t)
    p = primes[np.searchsorted(primes, y, side="right"):]
    if len(p) == 0:
        return N * math.log(t) - lgamma_n
    n = N // p
    c = -(-t // p)
    return float(np.sum(n * np.log(c * p / t))) - (lgamma_n - N * math.log(t))


# ---------------------------------------------------------------------------
# Analytic evaluation
# ---------------------------------------------------------------------------

def _term(N: int, t: int, p: int, bits: int) -> RationalInterval:
    c = -(-t // p)
    arg = Fraction(c * p, t)
    if arg == 1:
        return RationalInterval.point(0)
    return log_enclosure(arg, bits) * (N // p)


def _segment_pieces(N: int, t: int, a: Fraction, b: Fraction, bits: int) -> Optional[StepFunctionDescriptor]:
    """
    Pieces of h(p) = floor(N/p) log(c p / t) on (a, b], where c is ceil(t/p)
    taken from the left at p = t/k; None when there are too many breakpoints.
    """
    k_lo, k_hi = math.ceil(N / b), math.floor(N / a)
    c_lo, c_hi = math.ceil(t / b), math.floor(t / a)
    if (k_hi - k_lo) + (c_hi - c_lo) > _MAX_PIECES:
        return None
    cuts = {Fraction(N, k) for k in range(max(k_lo, 1), k_hi + 1)}
    cuts |= {Fraction(t, c) for c in range(max(c_lo, 1), c_hi + 1)}
    points = [a] + sorted(v for v in cuts if a < v < b) + [b]
    pieces = []
    for left, right in zip(points, points[1:]):
        mid = (left + right) / 2
        n, c = math.floor(N / mid), math.ceil(t / mid)
        log_l = log_enclosure(c * left / t, bits)
        log_r = log_enclosure(c * right / t, bits)
        start = (log_l * n).max(0)
        end = (log_r * n).max(0)
        integral = ((log_r * right - right) - (log_l * left - left)) * n
        pieces.append(StepPiece(left, right, start, end, integral))
    return StepFunctionDescriptor(tuple(pieces))


def crit_sum_lower_analytic(N: int, t: int, bits: int = None) -> Fraction:
    """
    Rigorous lower bound on the criterion sum using explicit prime-sum bounds
    above 1423 and exact summation below; segments that would need too many
    pieces are dropped (every term is non-negative).
    """
    bits = bits or default_bits()
    y = crit_threshold(t)
    total = Fraction(0)
    small_top = min(N, PRIME_SUM_MIN_Y)
    if y < small_top:
        for p in sieve_primes(PRIME_SUM_MIN_Y).primes_in(math.floor(y), small_top).tolist():
            total += _term(N, t, p, bits).lo
    a = max(y, Fraction(small_top))
    dropped = 0
    while a < N:
        b = min(a * _SEGMENT_RATIO, Fraction(N))
        desc = _segment_pieces(N, t, a, b, bits)
        if desc is None:
            dropped += 1
        else:
            lower = prime_sum_bounds(a, b, desc, PrimeWeight.unit, Direction.lower, bits)
            # primes p | t with a < p <= b were counted with the left limit of ceil(t/p)
            for q in _prime_divisors(t):
                if a < q <= b:
                    lower -= (log_enclosure(1 + Fraction(q, t), bits) * (N // q)).hi
            total += max(Fraction(0), lower)
        a = b
    if dropped:
        logger.debug("[UPPER] analytic N=%d t=%d dropped %d dense segments", N, t, dropped)
    return total


def _prime_divisors(n: int) -> List[int]:
    out, d = [], 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


def upper_crit_test(N: int, t: int, mode: UpperMode = UpperMode.exact_sieve,
                    table: Optional[PrimeTable] = None, bits: int = None) -> bool:
    """True certifies t(N) < t."""
    mode = UpperMode(mode)
    if not 2 <= t <= N:
        raise DomainError(f"need 2 <= t <= N (N={N}, t={t})")
    bits = bits or default_bits()
    if mode == UpperMode.exact_sieve:
        if N > get_settings()["sieve_limit"]:
            raise DomainError(f"N={N} is above the sieve limit; use the analytic mode")
        return crit_margin(N, t, table, bits).lo > 0
    rhs = factorial_log_bounds(N, bits) - log_int(t, bits) * N
    return crit_sum_lower_analytic(N, t, bits) > rhs.hi


def trivial_upper(N: int) -> int:
    """Least t with t > (N!)^(1/N) by float estimate, nudged until certified."""
    t = max(2, math.ceil(math.exp(math.lgamma(N + 1) / N)))
    bits = default_bits()
    while (log_int(t, bits) * N).lo <= factorial_log_bounds(N, bits).hi:
        t += 1
    return t


def best_upper(N: int, table: Optional[PrimeTable] = None, window: Optional[int] = None) -> int:
    """
    Best upper bound on t(N) from the criterion: (least certified t) - 1.

    A float screen brackets the boundary by bisection, a downward scan with a
    safety window catches the non-monotone region, and the candidate is then
    certified on interval enclosures (moving up until it is).
    """
    if N < TNE_RANGE[0]:
        raise DomainError("best_upper needs N >= 80")
    window = window or get_settings()["upper_safety_window"]
    table = table or sieve_primes(N)
    primes = table.primes_in(1, N)
    lg = math.lgamma(N + 1)
    started = time.time()

    def passes(t: int) -> bool:
        return _margin_float(N, t, primes, lg) > 0

    hi = min(trivial_upper(N), N)
    lo = max(2, N // 4)
    if passes(lo):
        lo = 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if passes(mid):
            hi = mid
        else:
            lo = mid
    candidate, t, misses = hi, hi - 1, 0
    while t >= 2 and misses < window:
        if passes(t):
            candidate, misses = t, 0
        else:
            misses += 1
        t -= 1
    while candidate < N and not upper_crit_test(N, candidate, UpperMode.exact_sieve, table):
        candidate += 1
    logger.info("[UPPER] N=%d best bound t(N) <= %d (%.2fs)", N, candidate - 1, time.time() - started)
    return candidate - 1


# ---------------------------------------------------------------------------
# t(N) < N/e for 80 <= N <= 5000
# ---------------------------------------------------------------------------

@lru_cache(maxsize=2)
def _log_table(limit: int, bits: int = _LOG_SCALE_BITS) -> Tuple[np.ndarray, np.ndarray]:
    """Integer arrays lo, hi with lo[k] <= 2^bits log k <= hi[k] for 1 <= k <= limit."""
    lo = np.zeros(limit + 1, dtype=np.int64)
    hi = np.zeros(limit + 1, dtype=np.int64)
    scale = 1 << bits
    for k in range(2, limit + 1):
        enc = log_int(k, bits + 16)
        lo[k] = math.floor(enc.lo * scale)
        hi[k] = math.ceil(enc.hi * scale)
    return lo, hi


def _ceil_over_e(N: int, primes: np.ndarray, e: RationalInterval) -> np.ndarray:
    """ceil(N/(e p)) per prime; float where safely away from integers, intervals otherwise."""
    x = N / (math.e * primes)
    c = np.ceil(x).astype(np.int64)
    close = np.flatnonzero(np.abs(x - np.round(x)) < 1e-9)
    for i in close.tolist():
        c[i] = ceil_interval(Fraction(N, int(primes[i])) / e)
    return c


def _fe_sum(N: int, primes: np.ndarray, e: RationalInterval, logn: RationalInterval) -> RationalInterval:
    """Enclosure of sum of f_e(p/N) = floor(N/p) (log c + log p + 1 - log N) over the given primes."""
    if len(primes) == 0:
        return RationalInterval.point(0)
    lo_tab, hi_tab = _log_table(max(N, TNE_RANGE[1]))
    n = N // primes
    c = _ceil_over_e(N, primes, e)
    s_lo = int(np.sum(n * (lo_tab[c] + lo_tab[primes])))
    s_hi = int(np.sum(n * (hi_tab[c] + hi_tab[primes])))
    scale = 1 << _LOG_SCALE_BITS
    B = int(n.sum())
    rest = (1 - logn) * B
    return RationalInterval(Fraction(s_lo, scale) + rest.lo, Fraction(s_hi, scale) + rest.hi)


@dataclass
class TneRow:
    N: int
    lhs_threshold: RationalInterval
    lhs_tail: RationalInterval
    rhs: RationalInterval

    @property
    def passed(self) -> bool:
        return self.lhs_threshold.lo > self.rhs.hi

    @property
    def margin(self) -> float:
        return float(self.lhs_threshold.lo - self.rhs.hi)

    def as_row(self) -> Dict[str, object]:
        return {
            "N": self.N,
            "lhs_threshold": float(self.lhs_threshold.mid),
            "lhs_tail": float(self.lhs_tail.mid),
            "rhs": float(self.rhs.mid),
            "margin": self.margin,
            "pass": self.passed,
        }


@dataclass
class TneReport:
    rows: List[TneRow] = field(default_factory=list)

    @property
    def failures(self) -> List[int]:
        return [row.N for row in self.rows if not row.passed]

    @property
    def passed(self) -> bool:
        return not self.failures


def tne_row(N: int, bits: int = None) -> TneRow:
    """Both sides of the N/e inequality at a single N, with the threshold and the tail-only sums."""
    bits = bits or default_bits()
    e = e_enclosure(bits)
    logn = log_int(N, bits)
    table = sieve_primes(N)
    root = floor_interval(sqrt_enclosure(Fraction(N), bits) / e.sqrt(bits))
    start = ceil_interval(Fraction(N) / (e * root))
    threshold_primes = table.primes_in(start - 1, N)
    tail_primes = table.primes_in(floor_interval(Fraction(N) / e), N)
    rhs = (pi_enclosure(bits) * (2 * N)).log(bits) / 2 + Fraction(1, 12 * N)
    return TneRow(N, _fe_sum(N, threshold_primes, e, logn), _fe_sum(N, tail_primes, e, logn), rhs)


def tne_scan(N_lo: int = TNE_RANGE[0], N_hi: int = TNE_RANGE[1], bits: int = None) -> TneReport:
    """Check sum f_e(p/N) > log(2 pi N)/2 + 1/(12N) for every N in [N_lo, N_hi]."""
    if N_lo < TNE_RANGE[0] or N_hi > TNE_RANGE[1] or N_lo > N_hi:
        raise DomainError(f"tne_scan range must lie in [{TNE_RANGE[0]}, {TNE_RANGE[1]}]")
    started = time.time()
    report = TneReport([tne_row(N, bits) for N in range(N_lo, N_hi + 1)])
    if report.failures:
        logger.warning("[SCAN] N/e inequality fails at %s", report.failures[:10])
    logger.info("[SCAN] N/e scan [%d, %d] passed=%s (%.2fs)", N_lo, N_hi, report.passed, time.time() - started)
    return report


@dataclass
class TneTailCheck:
    N: int
    lhs: RationalInterval
    rhs: RationalInterval

    @property
    def passed(self) -> bool:
        return self.lhs.lo > self.rhs.hi


def tne_tail_check(N: int = TNE_RANGE[1], bits: int = None) -> TneTailCheck:
    """
    The large-N step: with the integral of f_e over [1/e, 1] equal to
    2/e - (log 2)/2 and TV* = 4 - 2 log 2, check
    (1 - 2/sqrt(N/e)) I >= TV* E(N)/N + log(2 pi N) log N/(2N) + log N/(12 N^2),
    whose two sides move in the favourable direction for larger N.
    """
    bits = bits or default_bits()
    e = e_enclosure(bits)
    log2 = log2_enclosure(bits)
    integral = 2 / e - log2 / 2
    tv = 4 - 2 * log2
    logn = log_int(N, bits)
    lhs = (1 - 2 / (Fraction(N) / e).sqrt(bits)) * integral
    rhs = (
        tv * error_majorant(N, bits) / N
        + (pi_enclosure(bits) * (2 * N)).log(bits) * logn / (2 * N)
        + logn / (12 * N * N)
    )
    return TneTailCheck(N, lhs, rhs)


# ---------------------------------------------------------------------------
# Reference curves
# ---------------------------------------------------------------------------

def asymptotic_reference(N: int, bits: int = None) -> Tuple[Fraction, Fraction, Fraction]:
    """1/e, 1/e - c0/log N and 1/e - c0/log N - c1/log^2 N (midpoints of tight enclosures)."""
    from src.egs.constants import reference_values

    if N < 3:
        raise DomainError("asymptotic_reference needs N >= 3")
    bits = bits or default_bits()
    c0, c1 = reference_values()
    inv_e = 1 / e_enclosure(bits)
    logn = log_int(N, bits)
    first = inv_e
    second = first - c0 / logn
    third = second - c1 / (logn * logn)
    return tuple(curve.rounded(bits).mid for curve in (first, second, third))


def bound_curve_rows(N_values: Sequence[int], lower_fn=None) -> List[Dict[str, object]]:
    """
    Rows of t(N)/N data: lower (greedy search unless lower_fn is given), the
    criterion upper bound, the trivial bound and the three reference curves.
    """
    from src.egs.greedy import search_t

    rows = []
    for N in N_values:
        lower = lower_fn(N) if lower_fn else search_t(N)[0]
        upper = best_upper(N) if N >= TNE_RANGE[0] else None
        ref = asymptotic_reference(N) if N >= 3 else (None, None, None)
        rows.append({
            "N": N,
            "lower": lower,
            "upper": upper,
            "trivial": trivial_upper(N) - 1,
            "ratio_lower": lower / N,
            "ratio_upper": (upper / N) if upper is not None else None,
            "inv_e": float(ref[0]) if ref[0] is not None else None,
            "asym_c0": float(ref[1]) if ref[1] is not None else None,
            "asym_c1": float(ref[2]) if ref[2] is not None else None,
        })
    return rows
