"""
Accounting equation, seed-multiset repair ledger and the K'-sum check.

The repair argument starts from the seed multiset B0: every 3-rough number in
(t, t(1+sigma)] repeated A times, with t = tau N. B0 is then repaired prime by
prime. The repair closes when the excess terms delta_1..delta_8 fit inside
delta = log(N!)/N - log t and the tiny-prime terms alpha_1..alpha_7 fit inside 1.

Every ledger entry is a RationalInterval enclosing an explicit upper bound
formula. A ledger may describe one N or a whole range [N_lo, N_hi] (or the tail
N >= N_lo). Decreasing bounds are evaluated at N_lo. The few entries that
subtract lower bounds take each factor at its own worst endpoint.
"""
import logging
import math
import re
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, TextIO, Tuple, Union

from pydantic import BaseModel, Field

from src.egs.certify import Certificate
from src.egs.errors import CertificateFormatError, DomainError, ResourceLimitError
from src.egs.interval import (
    RationalInterval,
    default_bits,
    e_enclosure,
    fraction_str,
    log_enclosure,
    sqrt_enclosure,
    to_fraction,
)
from src.egs.ntheory import (
    StepFunctionDescriptor,
    StepPiece,
    error_majorant,
    factorial_log_bounds,
    factorize,
    kappa_bound,
    largest_prime_factors,
    legendre_valuation,
    prime_count_range_bounds,
    simple_sieve,
)
from src.utils.constants import (
    KB_PREFIX_LIMIT,
    KB_THRESHOLD,
    PI_UPPER_COEFF,
    PRIME_SUM_MIN_Y,
    REPAIR_A,
    REPAIR_ALPHA_TOTAL,
    REPAIR_DELTA_TOTAL,
    REPAIR_INTERVALS,
    REPAIR_K,
    REPAIR_L,
    REPAIR_REFERENCE_POINT,
    REPAIR_REFERENCE_TAIL,
    REPAIR_TAIL_START,
)
from src.utils.helpers import parallel_map, parse_int

logger = logging.getLogger(__name__)

_KAPPA_ANCHOR = Fraction(9, 2)
_MAX_BITS = 512
_MATERIALIZE_CEILING = 10**7
_AUTO_MIN_RATIO = Fraction(101, 100)
_AUTO_MAX_ROUNDS = 40


# ---------------------------------------------------------------------------
# Accounting equation
# ---------------------------------------------------------------------------

@dataclass
class AccountingView:
    """
    Both sides of the accounting equation for one explicit multiset.

    surplus[p] is nu_p(N!) - nu_p(prod B); negative entries are deficits.
    """
    N: int
    t: Fraction
    size: int
    surplus: Dict[int, int]
    excess: RationalInterval
    budget: RationalInterval
    bits: int

    @property
    def balanced(self) -> bool:
        return all(v == 0 for v in self.surplus.values())

    @property
    def deficits(self) -> Dict[int, int]:
        return {p: -v for p, v in self.surplus.items() if v < 0}

    def surplus_term(self) -> RationalInterval:
        total = RationalInterval.point(0)
        for p, v in self.surplus.items():
            if v:
                total = total + v * log_enclosure(p, self.bits)
        return total

    def identity_gap(self) -> RationalInterval:
        """excess + sum surplus_p log p - budget; contains 0 when the equation holds."""
        return self.excess + self.surplus_term() - self.budget

    def holds(self) -> bool:
        return self.identity_gap().contains(0)

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "t": fraction_str(self.t),
            "size": self.size,
            "surplus": {str(p): v for p, v in sorted(self.surplus.items()) if v},
            "excess": self.excess.to_json(),
            "budget": self.budget.to_json(),
            "balanced": self.balanced,
            "identity_holds": self.holds(),
        }


def accounting(source: Union[Certificate, Iterable[int]], N: Optional[int] = None, t=None,
               bits: int = None) -> AccountingView:
    """
    Evaluate the accounting equation on an explicit multiset or a certificate.

    Args:
        source: a Certificate (expanded lazily) or an iterable of positive integers
        N: factorial order; defaults to the certificate's N
        t: threshold; defaults to the certificate's t

    Returns:
        AccountingView with exact surpluses and log enclosures for excess and budget
    """
    bits = bits or default_bits()
    if isinstance(source, Certificate):
        N = source.N if N is None else N
        t = source.t if t is None else t
        values = source.expand()
    else:
        values = list(source)
    if N is None or t is None:
        raise DomainError("accounting needs N and t for a plain multiset")
    t = to_fraction(t)
    if N < 1 or t <= 0:
        raise DomainError(f"accounting needs N >= 1 and t > 0, got N={N}, t={t}")
    counts = Counter(values)
    if any(b < 1 for b in counts):
        raise DomainError("multiset elements must be positive integers")

    used: Dict[int, int] = {}
    excess = RationalInterval.point(0)
    for b, mult in counts.items():
        if b > 1:
            excess = excess + mult * log_enclosure(b, bits)
        for p, e in factorize(b).items():
            used[p] = used.get(p, 0) + mult * e
    size = sum(counts.values())
    log_t = log_enclosure(t, bits)
    excess = excess - size * log_t

    primes = {int(p) for p in simple_sieve(N)} if N >= 2 else set()
    surplus: Dict[int, int] = {}
    log_factorial = RationalInterval.point(0)
    for p in sorted(primes | set(used)):
        nu = legendre_valuation(N, p) if p <= N else 0
        if nu:
            log_factorial = log_factorial + nu * log_enclosure(p, bits)
        surplus[p] = nu - used.get(p, 0)
    budget = log_factorial - size * log_t
    return AccountingView(N=N, t=t, size=size, surplus=surplus, excess=excess,
                          budget=budget, bits=bits)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def parse_tau(rule) -> Fraction:
    """Read "N/3", "2N/7", "1/3" or a number as the ratio t/N."""
    if not isinstance(rule, str):
        return to_fraction(rule)
    text = rule.replace(" ", "")
    match = re.fullmatch(r"(\d*)\*?N/(\d+)", text)
    if match:
        return Fraction(int(match.group(1) or 1), int(match.group(2)))
    try:
        return to_fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise DomainError(f"cannot parse threshold rule {rule!r}") from exc


@dataclass(frozen=True)
class RepairParams:
    N_lo: int
    N_hi: Optional[int]
    tau: Fraction
    A: int
    K: int
    L: Fraction
    sigma: Fraction
    gamma2: Fraction
    gamma3: Fraction
    kappa: RationalInterval
    kappa_star: RationalInterval
    kappa_2star: RationalInterval
    bits: int

    @property
    def tail(self) -> bool:
        return self.N_hi is None

    @property
    def t_lo(self) -> Fraction:
        return self.tau * self.N_lo

    @property
    def N_range(self) -> Optional[RationalInterval]:
        if self.tail:
            return None
        return RationalInterval(self.N_lo, self.N_hi)

    def describe(self) -> str:
        hi = "inf" if self.tail else f"{self.N_hi:.3g}"
        return f"[{self.N_lo:.3g}, {hi}] t={self.tau}N A={self.A} K={self.K} L={self.L}"


def condition_failures(N: int, tau: Fraction, A: int, K: int, L: Fraction) -> List[str]:
    """The side conditions of the repair argument at one N; an empty list means they hold."""
    failures = []
    t = tau * N
    if K < 5:
        failures.append(f"K >= 5 fails (K={K})")
    if A < 1:
        failures.append(f"A >= 1 fails (A={A})")
    if (t / K) ** 2 < N:
        failures.append(f"t/K >= sqrt(N) fails at N={N}")
    if t / K ** 2 < K:
        failures.append(f"t/K^2 >= K fails at N={N}")
    if t <= 3 * L:
        failures.append(f"t > 3L fails at N={N}")
    if A >= 1 and 1 + 3 / (tau * A) > t / K ** 2:
        failures.append(f"seed elements exceed (t/K)^2 at N={N}")
    if t / K < PRIME_SUM_MIN_Y:
        failures.append(f"t/K >= {PRIME_SUM_MIN_Y} needed for explicit prime counting at N={N}")
    if tau * e_enclosure().hi >= 1:
        failures.append(f"t/N < 1/e needed for a positive delta (t/N={tau})")
    return failures


def _gamma(a: RationalInterval, b: RationalInterval, shift: Fraction, kappa: Fraction,
           t: Fraction, bits: int) -> Fraction:
    log_shift = log_enclosure(shift, bits)
    value = (a / b) * (log_shift + kappa) / (log_enclosure(t, bits) - log_shift)
    return value.hi


def _kappa_2star(gamma: Fraction, log_base: RationalInterval, L: Fraction, kappa: RationalInterval,
                 bits: int) -> RationalInterval:
    log_sqrt12 = log_enclosure(12, bits) / 2
    ratio = log_sqrt12 / ((1 - gamma) * log_base)
    return (ratio - 1) * log_enclosure(12 * L, bits) + kappa * ratio


def build_params(N_range, t_rule="N/3", A: int = REPAIR_A, K: int = REPAIR_K, L=REPAIR_L,
                 bits: int = None) -> RepairParams:
    """
    Derive sigma, gamma_2, gamma_3 and the kappa constants for a range of N.

    Args:
        N_range: an int, or (N_lo, N_hi) with N_hi=None for the tail N >= N_lo
        t_rule: t/N as "N/3", "2N/7" or a rational

    Returns:
        RepairParams, with gamma values taken at N_lo where they are largest
    """
    bits = bits or default_bits()
    if isinstance(N_range, (tuple, list)):
        N_lo, N_hi = N_range
    else:
        N_lo = N_hi = N_range
    N_lo = int(N_lo)
    N_hi = None if N_hi is None else int(N_hi)
    if N_hi is not None and N_hi < N_lo:
        raise DomainError(f"empty N range [{N_lo}, {N_hi}]")
    tau, L = parse_tau(t_rule), to_fraction(L)
    if not 0 < tau < 1:
        raise DomainError(f"t/N must lie in (0, 1), got {tau}")

    failures = condition_failures(N_lo, tau, A, K, L)
    if failures:
        raise DomainError("repair conditions violated: " + "; ".join(failures))

    sigma = 3 / (tau * A)
    kappa = kappa_bound(_KAPPA_ANCHOR, bits=bits)
    kappa_star = kappa_bound(L, bits=bits)
    t0 = tau * N_lo
    log2 = log_enclosure(2, bits)
    log_sqrt3 = log_enclosure(3, bits) / 2
    gamma2 = _gamma(log2, log_sqrt3, 2 * L, kappa_star.hi, t0, bits)
    gamma3 = _gamma(log_sqrt3, log2, 3 * L, kappa_star.hi, t0, bits)
    if gamma2 >= 1 or gamma3 >= 1:
        raise DomainError(f"gamma values must stay below 1 (gamma2={float(gamma2)}, gamma3={float(gamma3)})")
    k2 = _kappa_2star(gamma2, log2, L, kappa_star, bits)
    k3 = _kappa_2star(gamma3, log_sqrt3, L, kappa_star, bits)
    return RepairParams(
        N_lo=N_lo, N_hi=N_hi, tau=tau, A=A, K=K, L=L, sigma=sigma,
        gamma2=gamma2, gamma3=gamma3, kappa=kappa, kappa_star=kappa_star,
        kappa_2star=k2.max(k3), bits=bits,
    )


# ---------------------------------------------------------------------------
# Prime densities over a range of N
# ---------------------------------------------------------------------------

def density_bounds(a: Fraction, b: Fraction, N_lo: int, N_hi: Optional[int],
                   bits: int) -> RationalInterval:
    """
    Enclosure of (pi(Nb) - pi(Na))/N valid for every N in [N_lo, N_hi].

    The upper bound decreases in N and is taken at N_lo. The lower bound mixes
    endpoints factor by factor and is 0 on an unbounded range.
    """
    upper = prime_count_range_bounds(N_lo * a, N_lo * b, bits).hi / N_lo
    if N_hi is None:
        return RationalInterval(0, upper).rounded(bits)
    shrink = 1 - 2 / sqrt_enclosure(N_lo * a, bits)
    main = shrink * (b - a) / log_enclosure(N_hi * (a + b) / 2, bits)
    err = 2 * error_majorant(N_lo * b, bits) / (N_lo * log_enclosure(N_lo * a, bits))
    lower = max(Fraction(0), (main - err).lo)
    return RationalInterval(min(lower, upper), upper).rounded(bits)


def b_pieces(m: int, tau: Fraction) -> List[Tuple[int, Fraction, Fraction]]:
    """
    (k, a, b) with floor(N/p) = k for every prime p/N in (a, b], covering [tau/m, tau/(m-1)).
    """
    lo_x = tau / m
    hi_x = tau / (m - 1) if m > 1 else Fraction(1)
    pieces = []
    for k in range(max(1, math.floor(1 / hi_x)), math.floor(1 / lo_x) + 1):
        a = max(lo_x, Fraction(1, k + 1))
        b = min(hi_x, Fraction(1, k))
        if a < b:
            pieces.append((k, a, b))
    return pieces


def _b_row(m: int, params: RepairParams) -> RationalInterval:
    """sum over k of k (pi(Nb) - pi(Na))/N for one m, with the half-open endpoints accounted."""
    N_lo, N_hi, bits = params.N_lo, params.N_hi, params.bits
    lo_x = params.tau / m
    hi_x = params.tau / (m - 1) if m > 1 else None
    total = RationalInterval.point(0)
    for k, a, b in b_pieces(m, params.tau):
        d = density_bounds(a, b, N_lo, N_hi, bits)
        lo, hi = k * d.lo, k * d.hi
        # a prime at exactly tN/m belongs here but not to (Na, Nb]; one at tN/(m-1) the reverse
        if a == lo_x:
            hi += Fraction(k + 1, N_lo)
        if hi_x is not None and b == hi_x:
            lo = max(Fraction(0), lo - Fraction(k, N_lo))
        total = total + RationalInterval(lo, hi)
    return total.rounded(bits)


def _a_row(m: int, params: RepairParams) -> RationalInterval:
    """A (pi(t(1+sigma)N/m) - pi(tN/min(m,K)))/N in units of N, or 0 when the range is empty."""
    a = params.tau / min(m, params.K)
    b = params.tau * (1 + params.sigma) / m
    if b <= a:
        return RationalInterval.point(0)
    return (params.A * density_bounds(a, b, params.N_lo, params.N_hi, params.bits)).rounded(params.bits)


def _nu(m: int, p: int) -> int:
    return factorize(m).get(p, 0)


def b_bounds(params: RepairParams, primes: Iterable[int]) -> Dict[int, RationalInterval]:
    rows = {m: _b_row(m, params) for m in range(2, params.K + 1)}
    out = {}
    for p in primes:
        total = RationalInterval.point(0)
        for m, row in rows.items():
            e = _nu(m, p)
            if e:
                total = total + e * row
        out[p] = total
    return out


def a_bounds(params: RepairParams, primes: Iterable[int]) -> Dict[int, RationalInterval]:
    top = math.floor(params.K * (1 + params.sigma))
    rows = {m: _a_row(m, params) for m in range(5, top + 1) if m % 2 and m % 3}
    out = {}
    for p in primes:
        total = RationalInterval.point(0)
        for m, row in rows.items():
            e = _nu(m, p)
            if e:
                total = total + e * row
        out[p] = total
    return out


# ---------------------------------------------------------------------------
# Obstruction function f_{N/t}
# ---------------------------------------------------------------------------

@lru_cache(maxsize=16)
def obstruction_descriptor(tau: Fraction, K: int, bits: int) -> StepFunctionDescriptor:
    """
    floor(1/x) log(ceil(tau/x) x/tau) on [tau/K, 1], one piece per stretch where both
    the floor and the ceiling are constant. Values at the breakpoints are taken from
    the left, which majorises the function.
    """
    lo = tau / K
    points = {lo, Fraction(1)}
    points.update(Fraction(1, k) for k in range(1, math.floor(1 / lo) + 1))
    points.update(tau / c for c in range(1, K + 1))
    grid = sorted(x for x in points if lo <= x <= 1)
    pieces = []
    for left, right in zip(grid, grid[1:]):
        mid = (left + right) / 2
        k = math.floor(1 / mid)
        scale = math.ceil(tau / mid) / tau
        log_left = log_enclosure(scale * left, bits)
        log_right = log_enclosure(scale * right, bits)
        integral = k * (right * log_right - left * log_left - (right - left))
        pieces.append(StepPiece(left, right, (k * log_left).rounded(bits),
                                (k * log_right).rounded(bits), integral.rounded(bits)))
    return StepFunctionDescriptor(tuple(pieces))


# ---------------------------------------------------------------------------
# Ledger
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LedgerEntry:
    name: str
    value: RationalInterval
    provenance: str
    monotone: bool = False

    @property
    def bound(self) -> Fraction:
        return self.value.hi


@dataclass
class Ledger:
    params: RepairParams
    delta: RationalInterval
    entries: Dict[str, LedgerEntry]
    a_bounds: Dict[int, RationalInterval] = field(default_factory=dict)
    b_bounds: Dict[int, RationalInterval] = field(default_factory=dict)

    def deltas(self) -> List[LedgerEntry]:
        return [e for name, e in self.entries.items() if name.startswith("delta")]

    def alphas(self) -> List[LedgerEntry]:
        return [e for name, e in self.entries.items() if name.startswith("alpha")]

    def delta_sum(self) -> RationalInterval:
        return sum((e.value for e in self.deltas()), RationalInterval.point(0))

    def alpha_sum(self) -> RationalInterval:
        return sum((e.value for e in self.alphas()), RationalInterval.point(0))

    def relative(self, name: str) -> Fraction:
        """An entry's upper bound in units of delta (alpha entries are returned as is)."""
        entry = self.entries[name]
        if name.startswith("delta"):
            return entry.bound / self.delta.lo
        return entry.bound

    def reference_mismatches(self, reference: Dict[str, str]) -> List[str]:
        """Entries that, rounded up to the reference's digits, differ from it by more than one unit."""
        notes = []
        for name, text in reference.items():
            unit = Fraction(1, 10 ** len(text.split(".")[1]))
            ours = self.relative(name)
            if abs(math.ceil(ours / unit) * unit - Fraction(text)) > unit:
                side = "above" if ours > Fraction(text) else "below"
                notes.append(f"{name} = {float(ours):.6f} is {side} the reference {text}")
        return notes

    def dump(self) -> "LedgerDump":
        p = self.params
        entries = [
            LedgerEntryModel(
                name=e.name,
                lo=fraction_str(e.value.lo),
                hi=fraction_str(e.value.hi),
                relative=f"{float(self.relative(e.name)):.6f}",
                provenance=e.provenance,
                monotone=e.monotone,
            )
            for e in self.entries.values()
        ]
        return LedgerDump(
            N_lo=str(p.N_lo), N_hi=None if p.tail else str(p.N_hi), tau=fraction_str(p.tau),
            A=p.A, K=p.K, L=fraction_str(p.L), sigma=fraction_str(p.sigma),
            gamma2=fraction_str(p.gamma2), gamma3=fraction_str(p.gamma3),
            kappa_2star=fraction_str(p.kappa_2star.hi), delta_lower=fraction_str(self.delta.lo),
            entries=entries, delta_total=fraction_str(self.delta_sum().hi),
            alpha_total=fraction_str(self.alpha_sum().hi),
        )


class LedgerEntryModel(BaseModel):
    name: str
    lo: str
    hi: str
    relative: str
    provenance: str
    monotone: bool


class LedgerDump(BaseModel):
    """JSON form of a ledger; every rational is a "num/den" string."""
    N_lo: str
    N_hi: Optional[str] = None
    tau: str
    A: int
    K: int
    L: str
    sigma: str
    gamma2: str
    gamma3: str
    kappa_2star: str
    delta_lower: str
    entries: List[LedgerEntryModel] = Field(default_factory=list)
    delta_total: str
    alpha_total: str


def _weighted_norm(x: RationalInterval, plus: Fraction, minus: Fraction) -> Fraction:
    """Upper bound of |x|_{plus,minus} = plus*x for x >= 0, minus*|x| otherwise."""
    return max(plus * max(x.hi, Fraction(0)), minus * max(-x.lo, Fraction(0)))


def _primes_between(lo, hi) -> List[int]:
    top = math.floor(hi)
    if top < 2:
        return []
    return [int(p) for p in simple_sieve(top) if p > lo]


def ledger(params: RepairParams) -> Ledger:
    """Rigorous enclosures of delta_1..delta_8 and alpha_1..alpha_7 over the params range."""
    started = time.time()
    bits, tau, A, K = params.bits, params.tau, params.A, params.K
    N0 = params.N_lo
    t0 = tau * N0
    kappa, kappa_star, k2s = params.kappa, params.kappa_star, params.kappa_2star
    log2, log3 = log_enclosure(2, bits), log_enclosure(3, bits)
    log_sqrt12 = log_enclosure(12, bits) / 2
    log_t = log_enclosure(t0, bits)
    log_tK = log_enclosure(t0 / K, bits)
    log_tK2 = log_enclosure(t0 / K ** 2, bits)
    delta = -log_enclosure(tau, bits) - 1

    small = _primes_between(3, K)
    medium = _primes_between(K, K * (1 + params.sigma))
    b_map = b_bounds(params, [2, 3] + small)
    a_map = a_bounds(params, small + medium)
    entries: Dict[str, LedgerEntry] = {}

    def put(name, value, provenance, monotone=False):
        value = RationalInterval.point(value) if not isinstance(value, RationalInterval) else value
        entries[name] = LedgerEntry(name, value.max(0), provenance, monotone)

    put("delta1", 3 / (2 * tau * A) + Fraction(4, N0), "excess of the seed multiset", True)

    f = obstruction_descriptor(tau, K, bits)
    E_ratio = error_majorant(N0, bits) / N0
    put("delta2", (f.integral() + f.tv_star() * E_ratio) / log_tK,
        "weighted prime sum of the obstruction function", True)

    bracket = (tau / K) / log_tK + PI_UPPER_COEFF * (tau / K) / (log_tK * log_tK)
    logN = log_enclosure(N0, bits)
    sqrtN = sqrt_enclosure(N0, bits)
    log_sqrtN = logN / 2
    log5 = log_enclosure(5, bits)
    bracket = bracket + logN / (sqrtN * log_sqrtN * log5) \
        + PI_UPPER_COEFF * logN / (sqrtN * log_sqrtN * log_sqrtN * log5)
    put("delta3", Fraction(4 * A + 3, 3) * kappa * bracket, "medium prime valuations of the seed", True)

    a_medium = sum((a_map[p] for p in medium), RationalInterval.point(0))
    put("delta4", kappa * RationalInterval.point(a_medium.hi), "prime cofactors above K", True)

    delta5 = Fraction(0)
    alpha5 = Fraction(0)
    for p in small:
        a, b = a_map[p], b_map[p]
        log_p = log_enclosure(p, bits)
        weight = (log_p / log_tK2).hi
        gap = a - b
        crude_d = weight * a.hi + b.hi
        delta5 += min(_weighted_norm(gap, weight, Fraction(1)), crude_d)
        plus = (log_p * (log_enclosure(K * K, bits) + k2s) / log_tK2).hi
        minus = (log_p + k2s).hi
        crude_a = plus * a.hi + minus * b.hi
        alpha5 += min(_weighted_norm(gap, plus, minus), crude_a)
    put("delta5", kappa * delta5, "small prime imbalance A_p - B_p")

    put("delta6", kappa / N0, "rounding of the final element", True)

    b2, b3 = b_map[2], b_map[3]
    inner = log_sqrt12 - b2.lo * log2 - b3.lo * log3
    if inner.hi >= 0:
        delta7 = kappa_star * inner / log_t
    elif params.tail:
        delta7 = RationalInterval.point(0)
    else:
        delta7 = kappa_star * inner / log_enclosure(tau * params.N_hi, bits)
    put("delta7", delta7, "3-smooth rounding against B_2, B_3")

    put("delta8", 2 * (log_t + kappa_star) / N0, "two extra 3-smooth elements", True)

    put("alpha1", 0, "seed is 3-rough")
    g2, g3 = params.gamma2, params.gamma3
    alpha2 = max((b2.hi - 2 * g2 * b3.lo) / (1 - g2), (2 * b3.hi - g3 * b2.lo) / (1 - g3))
    put("alpha2", alpha2, "gamma-norm of (B_2, B_3)")
    put("alpha3", Fraction(4 * A + 3, 3) / log_sqrt12 * (log_tK + k2s) * bracket,
        "medium prime valuations of the seed", True)

    if medium and params.tail:
        raise DomainError(f"primes {medium} lie in (K, K(1+sigma)]; alpha4 needs a bounded N range")
    alpha4 = RationalInterval.point(0)
    for p in medium:
        log_tp = log_enclosure(tau * params.N_hi / p, bits)
        alpha4 = alpha4 + (log_tp + k2s) * a_map[p].hi
    put("alpha4", alpha4 / log_sqrt12, "prime cofactors above K")
    put("alpha5", alpha5 / log_sqrt12, "small prime imbalance A_p - B_p")
    put("alpha6", (log_t + k2s) / (N0 * log_sqrt12), "final element", True)
    log_sqrt3 = log3 / 2
    alpha7 = ((log_enclosure(2 * N0, bits) / ((1 - g2) * N0 * log2))
              .max(log_enclosure(3 * N0, bits) / ((1 - g3) * N0 * log_sqrt3)))
    put("alpha7", alpha7, "rounding of the 2- and 3-adic budgets", True)

    out = Ledger(params=params, delta=delta, entries=entries, a_bounds=a_map, b_bounds=b_map)
    logger.info("[REPAIR] ledger %s delta_sum=%.6f delta alpha_sum=%.6f (%.2fs)",
                params.describe(), float(out.delta_sum().hi / delta.lo),
                float(out.alpha_sum().hi), time.time() - started)
    return out


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

@dataclass
class RepairReport:
    N_lo: int
    N_hi: Optional[int]
    status: str
    delta_lower: Optional[Fraction] = None
    delta_total: Optional[Fraction] = None
    alpha_total: Optional[Fraction] = None
    bits: Optional[int] = None
    failures: List[str] = field(default_factory=list)
    reference_notes: List[str] = field(default_factory=list)

    @property
    def verified(self) -> bool:
        return self.status == "verified"

    @property
    def delta_ratio(self) -> Optional[Fraction]:
        if self.delta_total is None:
            return None
        return self.delta_total / self.delta_lower

    def to_json(self) -> dict:
        def fmt(x):
            return None if x is None else fraction_str(x)

        return {
            "N_lo": str(self.N_lo),
            "N_hi": None if self.N_hi is None else str(self.N_hi),
            "status": self.status,
            "verified": self.verified,
            "delta_lower": fmt(self.delta_lower),
            "delta_total": fmt(self.delta_total),
            "alpha_total": fmt(self.alpha_total),
            "delta_ratio": None if self.delta_ratio is None else f"{float(self.delta_ratio):.6f}",
            "bits": self.bits,
            "failures": self.failures,
            "reference_notes": self.reference_notes,
        }


def _decide(book: Ledger) -> str:
    d, a = book.delta_sum(), book.alpha_sum()
    if d.hi <= book.delta.lo and a.hi <= 1:
        return "verified"
    if d.lo > book.delta.hi or a.lo > 1:
        return "failed"
    return "undecided"


def _uses_defaults(params: RepairParams) -> bool:
    return (params.tau, params.A, params.K, params.L) == (Fraction(1, 3), REPAIR_A, REPAIR_K, REPAIR_L)


def reference_notes(book: Ledger) -> List[str]:
    """
    Differences from the reference ledger. Only the default parameters at
    N = 10^11 and on the tail from 10^70 have reference values.
    """
    p = book.params
    if not _uses_defaults(p):
        return []
    if p.tail:
        return book.reference_mismatches(REPAIR_REFERENCE_TAIL) if p.N_lo == REPAIR_TAIL_START else []
    if not p.N_lo == p.N_hi == REPAIR_INTERVALS[0][0]:
        return []
    notes = book.reference_mismatches(REPAIR_REFERENCE_POINT)
    delta_ratio = book.delta_sum().hi / book.delta.lo
    if delta_ratio > REPAIR_DELTA_TOTAL:
        notes.append(f"sum of delta_i = {float(delta_ratio):.6f} delta is above the reference "
                     f"{float(REPAIR_DELTA_TOTAL):.4f} delta")
    if book.alpha_sum().hi > REPAIR_ALPHA_TOTAL:
        notes.append(f"sum of alpha_i = {float(book.alpha_sum().hi):.6f} is above the reference "
                     f"{float(REPAIR_ALPHA_TOTAL):.4f}")
    return notes


def reference_intervals() -> List[Tuple[int, Optional[int]]]:
    """The default cover of [10^11, 10^70] followed by the tail."""
    return list(REPAIR_INTERVALS) + [(REPAIR_TAIL_START, None)]


def repair_report(params: RepairParams) -> RepairReport:
    """Evaluate the ledger, raising the precision while the comparison is undecided."""
    while True:
        book = ledger(params)
        status = _decide(book)
        if status != "undecided" or params.bits >= _MAX_BITS:
            break
        logger.debug("[REPAIR] undecided at %d bits, retrying", params.bits)
        params = replace(params, bits=2 * params.bits)
    report = RepairReport(
        N_lo=params.N_lo, N_hi=params.N_hi, status=status, delta_lower=book.delta.lo,
        delta_total=book.delta_sum().hi, alpha_total=book.alpha_sum().hi, bits=params.bits,
        reference_notes=reference_notes(book),
    )
    for note in report.reference_notes:
        logger.info("[REPAIR] %s", note)
    if book.delta_sum().hi > book.delta.lo:
        report.failures.append(f"sum of delta_i = {float(report.delta_ratio):.6f} delta exceeds delta")
    if book.alpha_sum().hi > 1:
        report.failures.append(f"sum of alpha_i = {float(report.alpha_total):.6f} exceeds 1")
    return report


def verify_repair(params: RepairParams) -> bool:
    return repair_report(params).verified


def verify_range(N_lo: int, N_hi: Optional[int], t_rule="N/3", A: int = REPAIR_A, K: int = REPAIR_K,
                 L=REPAIR_L, bits: int = None) -> RepairReport:
    """Build params for the range and verify; violated side conditions give a rejected report."""
    try:
        params = build_params((N_lo, N_hi), t_rule, A, K, L, bits)
    except DomainError as exc:
        return RepairReport(N_lo=N_lo, N_hi=N_hi, status="rejected", failures=[str(exc)])
    return repair_report(params)


def _range_job(args) -> RepairReport:
    N_lo, N_hi, t_rule, A, K, L, bits = args
    return verify_range(N_lo, N_hi, t_rule, A, K, L, bits)


@dataclass
class RangeCoverage:
    reports: List[RepairReport]

    @property
    def verified(self) -> bool:
        return bool(self.reports) and all(r.verified for r in self.reports)

    def gaps(self) -> List[Tuple[int, Optional[int]]]:
        return [(r.N_lo, r.N_hi) for r in self.reports if not r.verified]


def verify_range_auto(N_lo: int, N_hi: Optional[int], t_rule="N/3", A: int = REPAIR_A,
                      K: int = REPAIR_K, L=REPAIR_L, bits: int = None,
                      min_ratio=_AUTO_MIN_RATIO, threads: Optional[int] = None) -> RangeCoverage:
    """
    Verify [N_lo, N_hi], splitting failed pieces at their geometric midpoint until
    they verify or N_hi/N_lo drops below min_ratio.
    """
    min_ratio = to_fraction(min_ratio)
    pending = [(N_lo, N_hi)]
    done: List[RepairReport] = []
    for round_no in range(_AUTO_MAX_ROUNDS):
        if not pending:
            break
        jobs = [(lo, hi, t_rule, A, K, L, bits) for lo, hi in pending]
        reports = parallel_map(_range_job, jobs, threads, executor="thread")
        pending = []
        for report in reports:
            lo, hi = report.N_lo, report.N_hi
            if report.verified or hi is None or Fraction(hi, lo) < min_ratio:
                done.append(report)
                continue
            mid = math.isqrt(lo * hi)
            pending.extend([(lo, mid), (mid, hi)])
        logger.info("[REPAIR] auto round %d: %d settled, %d to split", round_no + 1, len(done), len(pending))
    if pending:
        done.extend(RepairReport(N_lo=lo, N_hi=hi, status="undecided",
                                 failures=["subdivision budget exhausted"]) for lo, hi in pending)
    done.sort(key=lambda r: r.N_lo)
    return RangeCoverage(done)


def parse_interval_list(text: str) -> List[Tuple[int, Optional[int]]]:
    """Lines "I <lo> <hi>"; hi may be "inf" for the tail. Blank lines and # comments are skipped."""
    out = []
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] != "I" or len(parts) != 3:
            raise CertificateFormatError(f"expected 'I <lo> <hi>', got {raw.strip()!r}", line_number)
        try:
            lo = parse_int(parts[1])
            hi = None if parts[2].lower() in ("inf", "infinity", "-") else parse_int(parts[2])
        except DomainError as exc:
            raise CertificateFormatError(str(exc), line_number) from exc
        if hi is not None and hi < lo:
            raise CertificateFormatError(f"interval [{lo}, {hi}] is empty", line_number)
        out.append((lo, hi))
    return out


def read_interval_list(source: Union[str, TextIO]) -> List[Tuple[int, Optional[int]]]:
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            return parse_interval_list(fh.read())
    return parse_interval_list(source.read())


def verify_intervals(intervals: List[Tuple[int, Optional[int]]], t_rule="N/3", A: int = REPAIR_A,
                     K: int = REPAIR_K, L=REPAIR_L, bits: int = None,
                     threads: Optional[int] = None) -> RangeCoverage:
    """Verify a hand-chosen interval list and report whether consecutive intervals meet."""
    jobs = [(lo, hi, t_rule, A, K, L, bits) for lo, hi in intervals]
    reports = parallel_map(_range_job, jobs, threads, executor="thread")
    ordered = sorted(intervals)
    for (lo1, hi1), (lo2, _) in zip(ordered, ordered[1:]):
        if hi1 is None or hi1 < lo2:
            logger.warning("[REPAIR] interval list leaves a gap after [%s, %s]", lo1, hi1)
    return RangeCoverage(reports)


# ---------------------------------------------------------------------------
# Small-N materialisation
# ---------------------------------------------------------------------------

@dataclass
class SeedMeasurement:
    N: int
    t: Fraction
    size: int
    delta: RationalInterval
    delta1: RationalInterval
    a_exact: Dict[int, Fraction]
    b_exact: Dict[int, Fraction]
    violations: List[str] = field(default_factory=list)

    @property
    def sound(self) -> bool:
        return not self.violations


def seed_multiset(N: int, tau: Fraction, A: int) -> List[int]:
    """Distinct elements of B0: 3-rough n in (t, t(1+sigma)], each taken A times in B0."""
    t = tau * N
    top = t * (1 + 3 / (tau * A))
    return [n for n in range(math.floor(t) + 1, math.floor(top) + 1) if n % 2 and n % 3]


def materialize(params: RepairParams, ceiling: int = _MATERIALIZE_CEILING) -> SeedMeasurement:
    """
    Build B0 for a single small N and compare the measured delta_1, A_p and B_p
    with the ledger enclosures.
    """
    if params.tail or params.N_hi != params.N_lo:
        raise DomainError("materialize needs a single N")
    N = params.N_lo
    if N > ceiling:
        raise ResourceLimitError(f"materialize is limited to N <= {ceiling}")
    bits, tau, A, K = params.bits, params.tau, params.A, params.K
    t = tau * N
    seeds = seed_multiset(N, tau, A)
    excess = RationalInterval.point(0)
    for n in seeds:
        excess = excess + log_enclosure(n / t, bits)
    delta1 = (A * excess / N).rounded(bits)

    lpf = largest_prime_factors(max(seeds))
    a_exact: Dict[int, Fraction] = {}
    for n in seeds:
        P = int(lpf[n])
        if P > t / K:
            for p, e in factorize(n // P).items():
                a_exact[p] = a_exact.get(p, 0) + Fraction(A * e, N)

    primes = simple_sieve(N)
    b_exact: Dict[int, Fraction] = {}
    for m in range(2, K + 1):
        first, last = math.ceil(t / m), math.ceil(t / (m - 1)) - 1
        window = primes[(primes >= first) & (primes <= last)]
        weight = sum(N // int(p) for p in window)
        for p, e in factorize(m).items():
            b_exact[p] = b_exact.get(p, 0) + Fraction(e * weight, N)

    delta = (factorial_log_bounds(N, bits) / N - log_enclosure(t, bits)).rounded(bits)
    book = ledger(params)
    violations = []
    if delta1.hi > book.entries["delta1"].bound:
        violations.append(f"measured delta1 {float(delta1.hi):.6g} exceeds its bound")
    if delta.lo < book.delta.lo:
        violations.append("delta falls below its lower bound")
    for p, value in a_exact.items():
        bound = book.a_bounds.get(p)
        if bound is None or not bound.contains(value):
            violations.append(f"A_{p} = {float(value):.6g} outside {bound}")
    for p, value in b_exact.items():
        bound = book.b_bounds.get(p)
        if bound is None or not bound.contains(value):
            violations.append(f"B_{p} = {float(value):.6g} outside {bound}")
    logger.info("[REPAIR] materialized N=%d |B0|=%d violations=%d", N, A * len(seeds), len(violations))
    return SeedMeasurement(N=N, t=t, size=A * len(seeds), delta=delta, delta1=delta1,
                           a_exact=a_exact, b_exact=b_exact, violations=violations)


# ---------------------------------------------------------------------------
# K'-sum check
# ---------------------------------------------------------------------------

def _kb_term(n: int) -> Fraction:
    rough = 3 if n % 2 and n % 3 else 0
    return Fraction(rough - 1, n)


def kb_block(a: int) -> Fraction:
    """Sum of 3/n [(n,6)=1] - 1/n over the block 6a-1 <= n <= 6a+4."""
    return sum((_kb_term(n) for n in range(6 * a - 1, 6 * a + 5)), Fraction(0))


@dataclass
class KbReport:
    K_max: int
    prefix_min: Fraction
    prefix_argmin: int
    prefix_failures: List[int] = field(default_factory=list)
    block_failures: List[int] = field(default_factory=list)
    blocks_checked: int = 0
    limit: Optional[RationalInterval] = None
    rows: List[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.prefix_failures and not self.block_failures

    def to_json(self) -> dict:
        return {
            "K_max": self.K_max,
            "passed": self.passed,
            "prefix_min": fraction_str(self.prefix_min),
            "prefix_argmin": self.prefix_argmin,
            "prefix_failures": self.prefix_failures,
            "block_failures": self.block_failures,
            "blocks_checked": self.blocks_checked,
            "limit": None if self.limit is None else self.limit.to_json(),
        }


def kb_check(K_max: int = KB_PREFIX_LIMIT) -> KbReport:
    """
    Exact prefix sums of 3/n [(n,6)=1] - 1/n for K' <= 100 against 2/5, and
    positivity of every 6-block up to K_max. Rows carry the running sum for plotting.
    """
    if K_max < 1:
        raise DomainError("kb_check needs K_max >= 1")
    prefix = Fraction(0)
    worst, argmin = None, 0
    failures = []
    for n in range(1, KB_PREFIX_LIMIT + 1):
        prefix += _kb_term(n)
        if worst is None or prefix < worst:
            worst, argmin = prefix, n
        if prefix < KB_THRESHOLD:
            failures.append(n)

    block_failures = []
    blocks = 0
    for a in range(1, K_max // 6 + 1):
        blocks += 1
        if kb_block(a) <= 0:
            block_failures.append(a)

    rows = []
    running = 0.0
    for n in range(1, K_max + 1):
        running += (3.0 if n % 2 and n % 3 else 0.0) / n - 1.0 / n
        rows.append({"K": n, "sum": running})
    report = KbReport(K_max=K_max, prefix_min=worst, prefix_argmin=argmin, prefix_failures=failures,
                      block_failures=block_failures, blocks_checked=blocks,
                      limit=log_enclosure(12) / 2, rows=rows)
    logger.info("[KB] K_max=%d prefix_min=%.6f at %d blocks=%d passed=%s",
                K_max, float(worst), argmin, blocks, report.passed)
    return report
