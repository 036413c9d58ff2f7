"""
Rigorous enclosures of the constants in the asymptotic expansion of t(N)/N.

    c0   = (1/e) int_0^1 f_e(x) dx
    c1'  = (1/e) int_0^1 f_e(x) log(1/x) dx
    c1'' = sum_k (1/k) log((e/k) ceil(k/e))
    c1   = c1' + c0 c1'' - e c0^2 / 2

After the substitution y = 1/x both integrals become sums over pieces of
[1, oo) on which floor(y) and ceil(y/e) are constant; each piece has a
closed-form antiderivative. Long series are summed in parallel chunks into
integer fixed-point accumulators, so the reduction is exact and independent
of the worker count.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.egs.errors import DomainError, ResourceLimitError
from src.egs.interval import (
    RationalInterval,
    default_bits,
    e_enclosure,
    fraction_str,
    log2_enclosure,
    log_int,
    pi_enclosure,
)
from src.utils.constants import (
    C0_REFERENCE,
    C1_DOUBLE_PRIME_REFERENCE,
    C1_FINAL_ALT,
    C1_PRIME_ALT,
    C1_PRIME_REFERENCE,
    C1_REFERENCE,
)
from src.utils.helpers import chunked, parallel_map

logger = logging.getLogger(__name__)

MIN_TOL = Fraction(1, 10**10)
DEFAULT_SERIES_K = 10**6
DEFAULT_NFREQ = 10**5
_CHUNK = 20_000
_GUARD_BITS = 24
_SUITE_ROUNDS = 4


@dataclass
class ConstantEnclosure:
    name: str
    value: RationalInterval
    components: Dict[str, RationalInterval] = field(default_factory=dict)
    tail: RationalInterval = field(default_factory=lambda: RationalInterval.point(0))
    parameters: Dict[str, int] = field(default_factory=dict)
    references: Dict[str, Fraction] = field(default_factory=dict)

    @property
    def width(self) -> Fraction:
        return self.value.width

    def matches(self) -> Dict[str, bool]:
        """Which reference decimal expansions (read as truncations) this enclosure is consistent with."""
        out = {}
        for label, ref in self.references.items():
            step = Fraction(1, 10 ** _decimals(ref))
            out[label] = self.value.intersects(RationalInterval(ref, ref + step))
        return out

    @property
    def digits(self) -> str:
        """Common decimal prefix of both endpoints."""
        lo, hi = f"{float(self.value.lo):.15f}", f"{float(self.value.hi):.15f}"
        prefix = []
        for a, b in zip(lo, hi):
            if a != b:
                break
            prefix.append(a)
        return "".join(prefix)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "lo": fraction_str(self.value.lo),
            "hi": fraction_str(self.value.hi),
            "lo_float": float(self.value.lo),
            "hi_float": float(self.value.hi),
            "digits": self.digits,
            "width": float(self.width),
            "components": {k: v.to_json() for k, v in self.components.items()},
            "tail": self.tail.to_json(),
            "parameters": self.parameters,
            "matches": self.matches(),
        }


def _decimals(x: Fraction) -> int:
    d = 0
    while (x * 10**d).denominator != 1:
        d += 1
    return d


def reference_values() -> Tuple[Fraction, Fraction]:
    """Reference values of c0 and c1 for plotting asymptotic curves."""
    return C0_REFERENCE, C1_REFERENCE


# ---------------------------------------------------------------------------
# Fixed-point series
# ---------------------------------------------------------------------------

def _fixed(x: RationalInterval, scale_bits: int) -> Tuple[int, int]:
    return math.floor(x.lo * (1 << scale_bits)), math.ceil(x.hi * (1 << scale_bits))


def _series_term(kind: str, k: int, bits: int) -> RationalInterval:
    if kind == "log1p_sq":
        step = log_int(k + 1, bits) - log_int(k, bits)
        return step * step
    if kind == "inv_sq":
        return RationalInterval.point(Fraction(1, k * k))
    if kind == "c1pp":
        c = math.ceil(k / math.e)
        return (log_int(c, bits) + 1 - log_int(k, bits)) / k
    raise ValueError(f"unknown series {kind}")


def _series_chunk(args) -> Tuple[int, int]:
    kind, ks, bits = args
    scale = bits + _GUARD_BITS
    lo = hi = 0
    for k in ks:
        a, b = _fixed(_series_term(kind, k, bits), scale)
        lo += a
        hi += b
    return lo, hi


def series_sum(kind: str, K: int, bits: int = None, threads: Optional[int] = None) -> RationalInterval:
    """Enclosure of sum_{k=1}^{K} of the named series, summed in parallel chunks."""
    bits = bits or default_bits()
    scale = bits + _GUARD_BITS
    tasks = [(kind, chunk, bits) for chunk in chunked(range(1, K + 1), _CHUNK)]
    parts = parallel_map(_series_chunk, tasks, threads=threads)
    lo = sum(p[0] for p in parts)
    hi = sum(p[1] for p in parts)
    return RationalInterval(Fraction(lo, 1 << scale), Fraction(hi, 1 << scale))


# ---------------------------------------------------------------------------
# Piecewise integrals over [start, T]
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Point:
    where: float
    y: RationalInterval
    log: RationalInterval
    inv: RationalInterval


def _breakpoints(start: int, T: int, bits: int) -> List[_Point]:
    """Integers in [start, T] merged with the multiples k e inside (start, T)."""
    e = e_enclosure(bits)
    points = [
        _Point(float(m), RationalInterval.point(m), log_int(m, bits), RationalInterval.point(Fraction(1, m)))
        for m in range(start, T + 1)
    ]
    k = 1
    while k * math.e < T:
        if k * math.e > start:
            ke = e * k
            points.append(_Point(k * math.e, ke, log_int(k, bits) + 1, 1 / ke))
        k += 1
    points.sort(key=lambda p: p.where)
    return points


def _pieces(start: int, T: int, bits: int):
    """Yield (left, right, m, A) with floor(y) = m and A = log ceil(y/e) + 1 on the piece."""
    points = _breakpoints(start, T, bits)
    for left, right in zip(points, points[1:]):
        mid = (left.where + right.where) / 2
        c = math.ceil(mid / math.e)
        yield left, right, math.floor(mid), log_int(c, bits) + 1


def _fractional_integral(T: int, bits: int) -> RationalInterval:
    """(1/e) int_e^T {y} log(ceil(y/e)/(y/e)) dy / y^2, in closed form piece by piece."""
    e = e_enclosure(bits)
    scale = bits + _GUARD_BITS
    lo = hi = 0

    def F(p: _Point, m: int, A: RationalInterval) -> RationalInterval:
        return A * p.log - p.log * p.log / 2 - (p.log + 1 - A) * p.inv * m

    for left, right, m, A in _pieces(2, T, bits):
        if right.where <= math.e:
            continue
        a, b = _fixed(F(right, m, A) - F(left, m, A), scale)
        lo += a
        hi += b
    return RationalInterval(Fraction(lo, 1 << scale), Fraction(hi, 1 << scale)) / e


def _log_weighted_integral(T: int, bits: int) -> RationalInterval:
    """(1/e) int_1^T floor(y) log(ceil(y/e)/(y/e)) log(y) dy / y^2."""
    e = e_enclosure(bits)
    scale = bits + _GUARD_BITS
    lo = hi = 0

    def G(p: _Point, A: RationalInterval) -> RationalInterval:
        return (p.log * p.log + (2 - A) * p.log + 2 - A) * p.inv

    for left, right, m, A in _pieces(1, T, bits):
        a, b = _fixed((G(right, A) - G(left, A)) * m, scale)
        lo += a
        hi += b
    return RationalInterval(Fraction(lo, 1 << scale), Fraction(hi, 1 << scale)) / e


def _log_weighted_tail(T: int, bits: int) -> RationalInterval:
    """
    Tail over y > T: the sawtooth {-y/e} is replaced by its mean 1/2 with an
    integration-by-parts error, and the second-order Taylor terms are bounded.
    """
    e = e_enclosure(bits)
    L = log_int(T, bits)
    main = (L + 1) / (2 * T)
    saw = (e * L / (8 * T * T)).hi
    second = ((2 * L + 1) / (4 * T * T) + e * (2 * L + 1) / (8 * T * T)).hi
    return RationalInterval(main.lo - saw - second, main.hi + saw)


# ---------------------------------------------------------------------------
# The constants
# ---------------------------------------------------------------------------

def compute_c0(tol=Fraction(1, 10**8), bits: int = None, threads: Optional[int] = None) -> ConstantEnclosure:
    """
    c0 = (1/2e) sum log^2(1 + 1/k) + (2/e^2 - log 2/(2e)) - (1/e) int_e^oo {y} log(ceil(y/e)/(y/e)) dy/y^2.

    The series is summed to K with sum 1/k^2 subtracted off (tail of the
    difference in [-1/(2K^2), 0]); the integral is exact up to T with tail
    in [0, 1/(2T^2)].
    """
    tol = Fraction(tol)
    if tol < MIN_TOL:
        raise DomainError("tolerance below 1e-10 is not supported")
    bits = bits or default_bits()
    started = time.time()
    e = e_enclosure(bits)
    K = max(100, math.isqrt(math.ceil(1 / tol)) + 1)
    T = max(100, math.isqrt(math.ceil(2 / tol)) + 1)
    while True:
        head = series_sum("log1p_sq", K, bits, threads)
        inv_sq_tail = pi_enclosure(bits) * pi_enclosure(bits) / 6 - series_sum("inv_sq", K, bits, threads)
        diff_tail = RationalInterval(Fraction(-1, 2 * K * K), Fraction(0))
        series = (head + inv_sq_tail + diff_tail) / (2 * e)
        closed = 2 / (e * e) - log2_enclosure(bits) / (2 * e)
        frac_tail = RationalInterval(Fraction(0), Fraction(1, 2 * T * T))
        integral = _fractional_integral(T, bits) + frac_tail
        value = series + closed - integral
        if value.width <= tol:
            break
        K, T = 2 * K, 2 * T
        logger.debug("[CONST] c0 width %.3g above tol, retrying with K=%d T=%d", float(value.width), K, T)
    logger.info("[CONST] c0 in %s (K=%d, T=%d, %.2fs)", value, K, T, time.time() - started)
    return ConstantEnclosure(
        "c0", value,
        components={"series": series, "closed": closed, "fractional_integral": integral},
        tail=frac_tail,
        parameters={"K": K, "T": T},
        references={"reference": C0_REFERENCE},
    )


def compute_c1_prime(tol=Fraction(1, 10**8), bits: int = None) -> ConstantEnclosure:
    """c1' = (1/e) int_1^oo floor(y) log(ceil(y/e)/(y/e)) log(y) dy / y^2."""
    tol = Fraction(tol)
    bits = bits or default_bits()
    T = max(100, math.isqrt(math.ceil(40 / tol)) + 1)
    while True:
        body = _log_weighted_integral(T, bits)
        tail = _log_weighted_tail(T, bits)
        value = body + tail
        if value.width <= tol:
            break
        T *= 2
    return ConstantEnclosure(
        "c1_prime", value,
        components={"integral": body},
        tail=tail,
        parameters={"T": T},
        references={"primary": C1_PRIME_REFERENCE, "alternate": C1_PRIME_ALT},
    )


def _et_chunk(args) -> int:
    """Fixed-point upper bound on sum over n of (2e/(pi n) + 2e/(F+1)) / |sin(pi n / e)|."""
    ns, F, bits = args
    e, pi = e_enclosure(bits), pi_enclosure(bits)
    scale = bits + _GUARD_BITS
    total = 0
    for n in ns:
        s = abs((pi * n / e).sin(bits))
        weight = 2 * e / (pi * n) + 2 * e / (F + 1)
        total += math.ceil((weight / s).hi * (1 << scale))
    return total


def erdos_turan_tail(K: int, F: int, bits: int = None, threads: Optional[int] = None) -> Fraction:
    """
    Bound on |sum_{k>K} e({-k/e} - 1/2)/k^2| from the Erdos-Turan inequality
    with F frequencies and |S_{n,K}| <= 1/((K+1)^2 |sin(pi n/e)|).
    """
    bits = bits or default_bits()
    scale = bits + _GUARD_BITS
    tasks = [(c, F, bits) for c in chunked(range(1, F + 1), _CHUNK)]
    freq = Fraction(sum(parallel_map(_et_chunk, tasks, threads=threads)), 1 << scale)
    e = e_enclosure(bits)
    return ((e / K) / (F + 1) + freq / ((K + 1) ** 2)).hi


def compute_c1_double_prime(K: int = DEFAULT_SERIES_K, Nfreq: int = DEFAULT_NFREQ, accelerate: bool = True,
                            bits: int = None, threads: Optional[int] = None) -> ConstantEnclosure:
    """
    c1'' = sum (1/k) log((e/k) ceil(k/e)). The partial sum to K is exact; the
    tail is either the crude [0, e/K] or, accelerated,
    (e/2) sum_{k>K} 1/k^2 + ET error - [0, e^2/(4K^2)].
    """
    bits = bits or default_bits()
    started = time.time()
    e = e_enclosure(bits)
    head = series_sum("c1pp", K, bits, threads)
    if accelerate:
        inv_sq_tail = pi_enclosure(bits) * pi_enclosure(bits) / 6 - series_sum("inv_sq", K, bits, threads)
        et = erdos_turan_tail(K, Nfreq, bits, threads)
        mean = e / 2 * inv_sq_tail
        taylor = (e * e / (4 * K * K)).hi
        tail = RationalInterval(mean.lo - et - taylor, mean.hi + et)
    else:
        tail = RationalInterval(Fraction(0), (e / K).hi)
    value = head + tail
    logger.info("[CONST] c1'' in %s (K=%d, accelerate=%s, %.2fs)", value, K, accelerate, time.time() - started)
    return ConstantEnclosure(
        "c1_double_prime", value,
        components={"partial_sum": head},
        tail=tail,
        parameters={"K": K, "Nfreq": Nfreq if accelerate else 0},
        references={"reference": C1_DOUBLE_PRIME_REFERENCE},
    )


def compute_c1_suite(tol=Fraction(1, 10**8), accelerate: bool = True, K: Optional[int] = None,
                     Nfreq: Optional[int] = None, bits: int = None,
                     threads: Optional[int] = None) -> Tuple[ConstantEnclosure, ConstantEnclosure, ConstantEnclosure]:
    """
    (c1', c1'', c1) with c1 = c1' + c0 c1'' - e c0^2 / 2 in interval arithmetic.

    c0 and c1' start at tol/8 and tol/4. Each round that leaves c1 wider than
    tol narrows them fourfold and doubles the c1'' cutoff when its share
    exceeds tol/4.
    """
    tol = Fraction(tol)
    bits = bits or default_bits()
    if accelerate:
        K, Nfreq = K or DEFAULT_SERIES_K, Nfreq or DEFAULT_NFREQ
    else:
        K = K or min(math.ceil(math.e / tol), DEFAULT_SERIES_K)
    e = e_enclosure(bits)
    tol0, tol1 = tol / 8, tol / 4
    c1pp = None
    for _ in range(_SUITE_ROUNDS):
        c0 = compute_c0(max(tol0, MIN_TOL), bits, threads)
        c1p = compute_c1_prime(max(tol1, MIN_TOL), bits)
        if c1pp is None or c1pp.parameters["K"] != K:
            c1pp = compute_c1_double_prime(K, Nfreq or 0, accelerate, bits, threads)
        value = c1p.value + c0.value * c1pp.value - e * c0.value * c0.value / 2
        if value.width <= tol:
            break
        logger.info("[CONST] c1 width %.3g above tol %.3g, narrowing the components", float(value.width), float(tol))
        if c0.value.hi * c1pp.width > tol / 4:
            K, Nfreq = 2 * K, 2 * Nfreq if Nfreq else Nfreq
        tol0, tol1 = tol0 / 4, tol1 / 4
    else:
        raise ResourceLimitError(f"c1 enclosure stayed wider than {float(tol):.3g} after {_SUITE_ROUNDS} rounds")
    c1 = ConstantEnclosure(
        "c1", value,
        components={"c0": c0.value, "c1_prime": c1p.value, "c1_double_prime": c1pp.value},
        parameters={"K": K, "Nfreq": Nfreq or 0},
        references={"primary": C1_REFERENCE, "alternate": C1_FINAL_ALT},
    )
    for enc in (c1p, c1):
        flags = enc.matches()
        if len(set(flags.values())) > 1:
            logger.info("[CONST] %s agrees with %s", enc.name, [k for k, v in flags.items() if v])
    return c1p, c1pp, c1


def c0_quadrature(cutoff: int = 10**4, steps_per_unit: int = 5000) -> float:
    """
    Float midpoint rule for (1/e) int f_e(x) dx over [1/cutoff, 1] in the
    variable y = 1/x, plus the mean value 1/(2 cutoff) for the rest. Only an
    oracle for the rigorous computation (about four correct digits).
    """
    h = 1.0 / steps_per_unit
    total = 0.0
    for start in range(1, cutoff, 100):
        stop = min(start + 100, cutoff)
        y = start + h * (np.arange((stop - start) * steps_per_unit) + 0.5)
        vals = np.floor(y) * np.log(np.ceil(y / math.e) * math.e / y) / (y * y)
        total += float(vals.sum()) * h
    return total / math.e + 1 / (2 * cutoff)
