"""
Exact rational intervals with outward-rounded transcendental enclosures.

Arithmetic on RationalInterval is exact (fractions.Fraction endpoints). The
only rounding happens inside log/exp/sqrt/pi, which are evaluated with the
mpmath interval library at a configurable bit precision and converted back to
exact dyadic rationals.
"""
import math
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Union

from mpmath import libmp

from src.egs.errors import DomainError
from src.services.settings import get_settings

Number = Union[int, Fraction, "RationalInterval"]

_EXTRA_BITS = 16


def default_bits() -> int:
    return get_settings()["enclosure_bits"]


def to_fraction(x) -> Fraction:
    """Convert int, Fraction, Decimal, "num/den" strings or floats exactly."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, (float, Decimal)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    raise DomainError(f"cannot convert {x!r} to an exact rational")


def _raw_to_fraction(raw) -> Fraction:
    sign, man, exp, bc = raw
    if man == 0 and (exp != 0 or bc != 0):
        raise DomainError("enclosure endpoint is not finite")
    p, q = libmp.to_rational(raw)
    return Fraction(p, q)


def _raw_bounds(lo: Fraction, hi: Fraction, prec: int):
    a = libmp.from_rational(lo.numerator, lo.denominator, prec, libmp.round_floor)
    b = libmp.from_rational(hi.numerator, hi.denominator, prec, libmp.round_ceiling)
    return a, b


@dataclass(frozen=True)
class RationalInterval:
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        lo = to_fraction(self.lo)
        hi = to_fraction(self.hi)
        if lo > hi:
            raise DomainError(f"interval endpoints out of order: [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x) -> "RationalInterval":
        x = to_fraction(x)
        return cls(x, x)

    @classmethod
    def hull(cls, items: Iterable["RationalInterval"]) -> "RationalInterval":
        items = [as_interval(i) for i in items]
        return cls(min(i.lo for i in items), max(i.hi for i in items))

    # Arithmetic

    def __add__(self, other: Number) -> "RationalInterval":
        o = as_interval(other)
        return RationalInterval(self.lo + o.lo, self.hi + o.hi)

    __radd__ = __add__

    def __neg__(self) -> "RationalInterval":
        return RationalInterval(-self.hi, -self.lo)

    def __sub__(self, other: Number) -> "RationalInterval":
        return self + (-as_interval(other))

    def __rsub__(self, other: Number) -> "RationalInterval":
        return as_interval(other) - self

    def __mul__(self, other: Number) -> "RationalInterval":
        o = as_interval(other)
        products = (self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi)
        return RationalInterval(min(products), max(products))

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> "RationalInterval":
        o = as_interval(other)
        if o.lo <= 0 <= o.hi:
            raise DomainError(f"division by an interval containing zero: {o}")
        return self * RationalInterval(1 / o.hi, 1 / o.lo)

    def __rtruediv__(self, other: Number) -> "RationalInterval":
        return as_interval(other) / self

    def __abs__(self) -> "RationalInterval":
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return RationalInterval(0, max(-self.lo, self.hi))

    # Queries

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def mid(self) -> Fraction:
        return (self.lo + self.hi) / 2

    def contains(self, x) -> bool:
        if isinstance(x, RationalInterval):
            return self.lo <= x.lo and x.hi <= self.hi
        if isinstance(x, float):
            return float(self.lo) <= x <= float(self.hi) or self.lo <= Fraction(x) <= self.hi
        return self.lo <= to_fraction(x) <= self.hi

    def intersects(self, other: "RationalInterval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def max(self, other: Number) -> "RationalInterval":
        o = as_interval(other)
        return RationalInterval(max(self.lo, o.lo), max(self.hi, o.hi))

    def min(self, other: Number) -> "RationalInterval":
        o = as_interval(other)
        return RationalInterval(min(self.lo, o.lo), min(self.hi, o.hi))

    def rounded(self, bits: int = None) -> "RationalInterval":
        """Outward-round both endpoints onto a dyadic grid to keep denominators small."""
        prec = (bits or default_bits()) + _EXTRA_BITS
        a, b = _raw_bounds(self.lo, self.hi, prec)
        return RationalInterval(_raw_to_fraction(a), _raw_to_fraction(b))

    # Transcendental enclosures

    def _apply(self, fn, bits: int = None) -> "RationalInterval":
        prec = (bits or default_bits()) + _EXTRA_BITS
        a, b = fn(_raw_bounds(self.lo, self.hi, prec), prec)
        return RationalInterval(_raw_to_fraction(a), _raw_to_fraction(b))

    def log(self, bits: int = None) -> "RationalInterval":
        if self.lo <= 0:
            raise DomainError(f"log of a non-positive interval {self}")
        return self._apply(libmp.mpi_log, bits)

    def exp(self, bits: int = None) -> "RationalInterval":
        return self._apply(libmp.mpi_exp, bits)

    def sqrt(self, bits: int = None) -> "RationalInterval":
        if self.lo < 0:
            raise DomainError(f"sqrt of a negative interval {self}")
        return self._apply(libmp.mpi_sqrt, bits)

    def sin(self, bits: int = None) -> "RationalInterval":
        return self._apply(libmp.mpi_sin, bits)

    def to_json(self) -> dict:
        return {
            "lo": f"{self.lo.numerator}/{self.lo.denominator}",
            "hi": f"{self.hi.numerator}/{self.hi.denominator}",
            "lo_float": float(self.lo),
            "hi_float": float(self.hi),
        }

    def __str__(self) -> str:
        return f"[{float(self.lo):.12g}, {float(self.hi):.12g}]"


def as_interval(x: Number) -> RationalInterval:
    if isinstance(x, RationalInterval):
        return x
    return RationalInterval.point(x)


def log_enclosure(x: Number, bits: int = None) -> RationalInterval:
    if isinstance(x, int) and not isinstance(x, bool):
        return log_int(x, bits or default_bits())
    return as_interval(x).log(bits)


@lru_cache(maxsize=1 << 16)
def log_int(n: int, bits: int) -> RationalInterval:
    if n <= 0:
        raise DomainError(f"log of non-positive integer {n}")
    if n == 1:
        return RationalInterval.point(0)
    return RationalInterval.point(n).log(bits)


def exp_enclosure(x: Number, bits: int = None) -> RationalInterval:
    return as_interval(x).exp(bits)


def sqrt_enclosure(x: Number, bits: int = None) -> RationalInterval:
    return as_interval(x).sqrt(bits)


def _constant(fn, bits: int) -> RationalInterval:
    prec = bits + _EXTRA_BITS
    lo = fn(prec, libmp.round_floor)
    hi = fn(prec, libmp.round_ceiling)
    return RationalInterval(_raw_to_fraction(lo), _raw_to_fraction(hi))


@lru_cache(maxsize=32)
def pi_enclosure(bits: int = None) -> RationalInterval:
    return _constant(libmp.mpf_pi, bits or default_bits())


@lru_cache(maxsize=32)
def e_enclosure(bits: int = None) -> RationalInterval:
    return _constant(libmp.mpf_e, bits or default_bits())


@lru_cache(maxsize=32)
def log2_enclosure(bits: int = None) -> RationalInterval:
    return _constant(libmp.mpf_ln2, bits or default_bits())


def floor_interval(x: RationalInterval) -> int:
    """Floor of a real known only through an enclosure; raises if undecided."""
    lo, hi = math.floor(x.lo), math.floor(x.hi)
    if lo != hi:
        raise DomainError(f"floor of {x} is not determined at this precision")
    return lo


def ceil_interval(x: RationalInterval) -> int:
    lo, hi = math.ceil(x.lo), math.ceil(x.hi)
    if lo != hi:
        raise DomainError(f"ceiling of {x} is not determined at this precision")
    return lo


def fraction_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"
