"""
Greedy t-admissible subfactorizations of N! and the searches built on them.

The standard greedy repeatedly takes the largest prime p in surplus and pairs
it with the smallest cofactor m such that m*p >= t divides what is left. Primes
above the split point M always take m = ceil(t/p), so they are handled in bulk
with numpy; the remaining M-smooth part is consumed from a table of candidate
cofactors scanned in nondecreasing order.
"""
import bisect
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.egs.certify import Certificate, PrimeBlock, verify_subfactorization
from src.egs.errors import ChainGapError, DomainError, GreedyResidualError, ResourceLimitError
from src.egs.ntheory import (
    PrimeTable,
    factorize,
    largest_prime_factors,
    legendre_valuations,
    sieve_primes,
    smallest_prime_factors,
)
from src.services.settings import get_settings
from src.utils.constants import GREEDY_SEARCH_MAX_ITER, HINT_CHAIN_MIN_START, T1_UPPER_MARGIN
from src.utils.helpers import chunked, parallel_map, worker_pool

logger = logging.getLogger(__name__)


class GreedyVariant(str, Enum):
    standard = "standard"
    fast = "fast"


class SearchStrategy(str, Enum):
    bisection = "bisection"
    heuristic = "heuristic"


@dataclass(frozen=True)
class GreedyConfig:
    variant: GreedyVariant = GreedyVariant.standard
    M: Optional[int] = None
    smooth_table_limit: Optional[int] = None
    threads: Optional[int] = None

    def split_point(self, N: int, t: int) -> int:
        """Primes above the split point go through the bulk phase."""
        if self.M is not None:
            return self.M
        root = math.isqrt(N)
        if self.variant == GreedyVariant.fast:
            M = max(root, 2)
            while M * (M - 1) < t:
                M += 1
            return M
        if N < 16 or not 2 <= t < N / 2:
            return N
        return root


@dataclass
class GreedyResult:
    certificate: Certificate
    count: int
    large_count: int
    split_point: int
    residual: Dict[int, int] = field(default_factory=dict)

    @property
    def surplus(self) -> int:
        return self.count - self.certificate.N


@dataclass(frozen=True)
class CofactorTable:
    values: List[int]
    factors: Tuple[Tuple[Tuple[int, int], ...], ...]


@lru_cache(maxsize=8)
def cofactor_table(smooth_bound: int, limit: int, t_filter: int) -> CofactorTable:
    """
    Candidate cofactors m <= limit that are smooth_bound-smooth and satisfy
    P+(m) * m <= t_filter * P-(m); a greedy choice always passes this filter.
    """
    limit = max(limit, 1)
    m = np.arange(limit + 1, dtype=np.int64)
    lpf = largest_prime_factors(limit)
    spf = smallest_prime_factors(limit)
    mask = (lpf <= smooth_bound) & (lpf * m <= t_filter * spf)
    mask[0] = False
    mask[1] = True
    values = np.flatnonzero(mask).tolist()
    factors = tuple(tuple(sorted(factorize(v, spf).items())) for v in values)
    logger.debug("[GREEDY] cofactor table M=%d limit=%d size=%d", smooth_bound, limit, len(values))
    return CofactorTable(values=values, factors=factors)


def _fits(fac: Tuple[Tuple[int, int], ...], q: int, power: int, residual: Dict[int, int]) -> int:
    """Largest e with (m * q^power)^e dividing the residual (0 if none)."""
    need_q = power
    e = None
    for s, k in fac:
        if s == q:
            need_q += k
            continue
        have = residual.get(s, 0)
        if have < k:
            return 0
        c = have // k
        if e is None or c < e:
            e = c
    cq = residual.get(q, 0) // need_q
    if e is None or cq < e:
        return cq
    return e


def _consume(fac, q: int, power: int, e: int, residual: Dict[int, int]) -> None:
    residual[q] -= power * e
    for s, k in fac:
        residual[s] -= k * e


def large_phase(N: int, t: int, M: int, table: PrimeTable) -> Tuple[List[PrimeBlock], int, Dict[int, int]]:
    """
    Bulk phase for primes p > M using m = ceil(t/p) with nu_p(N!) copies each.

    Returns:
        (blocks, factor count, residual valuations of primes <= M)
    """
    small = table.primes_in(1, min(M, N))
    residual = dict(zip(small.tolist(), legendre_valuations(N, small).tolist()))
    big = table.primes_in(M, N)
    if len(big) == 0:
        return [], 0, residual
    e = legendre_valuations(N, big)
    m = -(-t // big)
    used = np.zeros(int(m.max()) + 1, dtype=np.int64)
    np.add.at(used, m, e)
    spf = smallest_prime_factors(max(int(m.max()), 2))
    for mm in np.flatnonzero(used).tolist():
        if mm == 1:
            continue
        for s, k in factorize(mm, spf).items():
            if s > M:
                raise GreedyResidualError(s, M)
            residual[s] -= k * int(used[mm])
            if residual[s] < 0:
                raise GreedyResidualError(s, M)
    change = np.flatnonzero((m[1:] != m[:-1]) | (e[1:] != e[:-1])) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change - 1, [len(big) - 1]))
    blocks = [
        PrimeBlock(int(m[a]), int(big[a]), int(big[b]), int(e[a]))
        for a, b in zip(starts.tolist(), ends.tolist())
    ]
    return blocks, int(e.sum()), residual


def _small_phase(t: int, residual: Dict[int, int], cofactors: CofactorTable,
                 out: Counter) -> None:
    values = cofactors.values
    top = bisect.bisect_right(values, t)
    ptr = 0
    for q in sorted((p for p, r in residual.items() if r > 0), reverse=True):
        while residual[q] > 0:
            i = max(ptr, bisect.bisect_left(values, -(-t // q)))
            chosen = None
            while i < top:
                e = _fits(cofactors.factors[i], q, 1, residual)
                if e:
                    chosen = (i, e)
                    break
                i += 1
            if chosen is None:
                return
            i, e = chosen
            ptr = i
            _consume(cofactors.factors[i], q, 1, e, residual)
            out[values[i] * q] += e


def _fast_small_phase(t: int, residual: Dict[int, int], cofactors: CofactorTable,
                      out: Counter) -> None:
    values = cofactors.values
    top = len(values)
    ptr = {1: 0, 2: 0}
    for q in sorted((p for p, r in residual.items() if r > 0), reverse=True):
        while residual[q] > 0:
            chosen = None
            for power in (1, 2):
                if residual[q] < power:
                    break
                need = -(-t // q ** power)
                i = max(ptr[power], bisect.bisect_left(values, need))
                while i < top:
                    e = _fits(cofactors.factors[i], q, power, residual)
                    if e:
                        chosen = (power, i, e)
                        break
                    i += 1
                if chosen:
                    break
            if chosen is None:
                return
            power, i, e = chosen
            ptr[power] = i
            _consume(cofactors.factors[i], q, power, e, residual)
            out[values[i] * q ** power] += e


def _final_phase(t: int, residual: Dict[int, int], out: Counter) -> None:
    """Combine the remaining primes in decreasing order into factors >= t."""
    built: List[int] = []
    current = 1
    for q in sorted((p for p, r in residual.items() if r > 0), reverse=True):
        for _ in range(residual[q]):
            current *= q
            residual[q] -= 1
            if current >= t:
                built.append(current)
                current = 1
    if built and current > 1:
        # leftover below t goes into the largest combined factor
        built[built.index(max(built))] *= current
    for f in built:
        out[f] += 1


def pack_residual(t: int, residual: Dict[int, int], smooth_bound: Optional[int] = None) -> Counter:
    """
    Build factors >= t from leftover prime valuations, largest primes first.

    The residual dict is consumed in place; whatever cannot be packed stays in it.
    """
    out: Counter = Counter()
    live = [p for p, r in residual.items() if r > 0]
    if t <= 1 or not live:
        return out
    bound = smooth_bound or max(live)
    _small_phase(t, residual, cofactor_table(bound, t, t), out)
    return out


def _run_greedy(N: int, t: int, cfg: GreedyConfig, table: PrimeTable) -> GreedyResult:
    M = cfg.split_point(N, t)
    out: Counter = Counter()
    blocks, large_count, residual = large_phase(N, t, M, table)
    if t <= 1:
        for q, r in residual.items():
            out[q] += r
            residual[q] = 0
    elif cfg.variant == GreedyVariant.fast:
        if M * (M - 1) < t:
            raise DomainError(f"fast variant needs M(M-1) >= t (M={M}, t={t})")
        limit = cfg.smooth_table_limit or max(int(round(N ** (2 / 3))), 2)
        _fast_small_phase(t, residual, cofactor_table(M, limit, N), out)
        _final_phase(t, residual, out)
    else:
        limit = cfg.smooth_table_limit or t
        cofactors = cofactor_table(min(M, N), max(limit, t), max(limit, t))
        _small_phase(t, residual, cofactors, out)
    explicit = [(mult, f) for f, mult in sorted(out.items(), reverse=True)]
    count = large_count + sum(out.values())
    if t <= 1 and count < N:
        explicit.append((N - count, 1))
        count = N
    cert = Certificate(N=N, t=t, explicit_factors=explicit, prime_blocks=blocks)
    return GreedyResult(cert, count, large_count, M, {q: r for q, r in residual.items() if r})


def greedy_result(N: int, t: int, cfg: GreedyConfig = GreedyConfig(),
                  table: Optional[PrimeTable] = None) -> GreedyResult:
    """Run a greedy variant, doubling M whenever the bulk phase overdraws a small prime."""
    if N < 1:
        raise DomainError("N must be positive")
    table = table or sieve_primes(max(N, 2))
    while True:
        try:
            return _run_greedy(N, t, cfg, table)
        except GreedyResidualError as exc:
            M = cfg.split_point(N, t)
            if M >= N:
                raise
            logger.info("[GREEDY] %s; retrying with M=%d", exc, 2 * M)
            cfg = GreedyConfig(cfg.variant, min(2 * M, N), cfg.smooth_table_limit, cfg.threads)


def greedy_subfactorization(N: int, t: int, cfg: GreedyConfig = GreedyConfig(),
                            table: Optional[PrimeTable] = None) -> Certificate:
    """Standard greedy certificate; verify_subfactorization accepts it whenever count >= N."""
    cfg = GreedyConfig(GreedyVariant.standard, cfg.M, cfg.smooth_table_limit, cfg.threads)
    if cfg.M is not None:
        return _run_greedy(N, t, cfg, table or sieve_primes(max(N, 2))).certificate
    return greedy_result(N, t, cfg, table).certificate


def fast_greedy(N: int, t: int, cfg: GreedyConfig = GreedyConfig(GreedyVariant.fast),
                table: Optional[PrimeTable] = None) -> Certificate:
    cfg = GreedyConfig(GreedyVariant.fast, cfg.M, cfg.smooth_table_limit, cfg.threads)
    return greedy_result(N, t, cfg, table).certificate


def greedy_count(N: int, t: int, variant: GreedyVariant = GreedyVariant.standard) -> int:
    return greedy_result(N, t, GreedyConfig(GreedyVariant(variant))).count


def _count_task(args: Tuple[int, int, str, Optional[int]]) -> Tuple[int, int]:
    N, t, variant, table_limit = args
    cfg = GreedyConfig(GreedyVariant(variant), smooth_table_limit=table_limit)
    return t, greedy_result(N, t, cfg).count


# ---------------------------------------------------------------------------
# Searches
# ---------------------------------------------------------------------------

def _best_small(N: int, variant: GreedyVariant) -> Tuple[int, Certificate]:
    """Largest t with greedy count >= N, scanning down from the trivial bound."""
    t = max(1, math.ceil(math.exp(math.lgamma(N + 1) / N)) + 1)
    while t > 1:
        result = greedy_result(N, t, GreedyConfig(variant))
        if result.count >= N:
            return t, result.certificate
        t -= 1
    return 1, greedy_result(N, 1, GreedyConfig(variant)).certificate


def search_t(N: int, strategy: SearchStrategy = SearchStrategy.heuristic,
             variant: GreedyVariant = GreedyVariant.standard) -> Tuple[int, Certificate]:
    """
    Find t with a verified greedy certificate proving t(N) >= t.

    Returns:
        (t, certificate) with t in [t0(N), t1(N)]
    """
    strategy, variant = SearchStrategy(strategy), GreedyVariant(variant)
    if N <= get_settings()["small_search_exhaustive"]:
        return _best_small(N, variant)
    cfg = GreedyConfig(variant)

    def run(t: int) -> GreedyResult:
        return greedy_result(N, t, cfg)

    t_low, t_high = N // 4, N // 2 + 1
    best = run(t_low)
    if best.count < N:
        t_low, best = 1, run(1)
    started = time.time()
    if strategy == SearchStrategy.bisection:
        while t_high - t_low > 1:
            mid = (t_low + t_high + 1) // 2
            result = run(mid)
            if result.count >= N:
                t_low, best = mid, result
            else:
                t_high = mid
    else:
        t = -(-N // 3)
        for _ in range(GREEDY_SEARCH_MAX_ITER):
            if t_high - t_low <= 1:
                break
            result = run(t)
            if result.count >= N:
                if t > t_low:
                    t_low, best = t, result
            else:
                t_high = min(t_high, t)
            if t_high - t_low <= 1:
                break
            if t_high - t_low < 4:
                t = (t_low + t_high) // 2
                continue
            guess = int(round(math.exp(result.count / N * math.log(t))))
            if guess <= t_low:
                guess = (3 * t_low + t_high) // 4
            elif guess >= t_high:
                guess = (t_low + 3 * t_high) // 4
            t = min(max(guess, t_low + 1), t_high - 1)
    logger.info("[SEARCH] N=%d strategy=%s t=%d (%.2fs)", N, strategy.value, t_low, time.time() - started)
    return t_low, best.certificate


def t1_upper_bound(N: int, variant: GreedyVariant = GreedyVariant.standard) -> int:
    """Least t where B1 + floor(log R / log t) < N, plus a margin; t1(N) lies below it."""
    table = sieve_primes(max(N, 2))

    def bound(t: int) -> int:
        M = GreedyConfig(variant).split_point(N, t)
        try:
            _, large, residual = large_phase(N, t, M, table)
        except GreedyResidualError:
            _, large, residual = large_phase(N, t, N, table)
        log_r = sum(r * math.log(q) for q, r in residual.items())
        return large + int(log_r / math.log(t) + 1e-9)

    lo, hi = max(2, N // 4), N
    if bound(lo) < N:
        lo = 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if bound(mid) < N:
            hi = mid
        else:
            lo = mid
    return hi + T1_UPPER_MARGIN


def t1_exhaustive(N: int, threads: Optional[int] = None,
                  variant: GreedyVariant = GreedyVariant.standard) -> int:
    """Exact t1(N): the largest t at which the greedy proves M(N, t) >= N."""
    config = get_settings()
    if N > config["t1_ceiling"]:
        raise ResourceLimitError(
            f"N={N} exceeds the exhaustive ceiling {config['t1_ceiling']}; use search_t (heuristic)"
        )
    threads = threads or config["threads"]
    if N <= config["small_search_exhaustive"]:
        return _best_small(N, GreedyVariant(variant))[0]
    lower, _ = search_t(N, SearchStrategy.heuristic, variant)
    upper = t1_upper_bound(N, variant)
    logger.info("[T1] N=%d scanning t in [%d, %d)", N, lower, upper)
    candidates = list(range(upper - 1, lower, -1))
    with worker_pool(threads) as pool:
        for chunk in chunked(candidates, max(1, 4 * threads)):
            tasks = [(N, t, GreedyVariant(variant).value, upper) for t in chunk]
            hits = [t for t, count in parallel_map(_count_task, tasks, pool=pool) if count >= N]
            if hits:
                return max(hits)
    return lower


# ---------------------------------------------------------------------------
# Hint chains
# ---------------------------------------------------------------------------

class ChainMode(str, Enum):
    generate = "generate"
    verify = "verify"


def _chain_step(N: int, method: str, variant: GreedyVariant) -> int:
    if method == "exhaustive":
        return t1_exhaustive(N, variant=variant)
    return search_t(N, SearchStrategy.heuristic, variant)[0]


def hint_chain(N_start: int, N_end: int, mode: ChainMode = ChainMode.generate,
               hints: Optional[Sequence[Tuple[int, int]]] = None, method: str = "exhaustive",
               variant: GreedyVariant = GreedyVariant.standard) -> List[Tuple[int, int]]:
    """
    Generate or verify (N, t) pairs proving t(N') >= N'/3 for N_start <= N' <= N_end.

    Each pair covers N' in [N, 3t]; consecutive pairs must overlap.
    """
    mode = ChainMode(mode)
    if N_start < HINT_CHAIN_MIN_START:
        raise DomainError(f"hint chains for the N/3 target start at N >= {HINT_CHAIN_MIN_START}")
    if mode == ChainMode.generate:
        chain = []
        N = N_start
        while N <= N_end:
            t = _chain_step(N, method, variant)
            if t <= -(-N // 3):
                raise ChainGapError(N, N)
            chain.append((N, t))
            logger.info("[CHAIN] N=%d t=%d next N=%d", N, t, 3 * t)
            N = 3 * t
        return chain
    if not hints:
        raise DomainError("verify mode needs hints")
    pairs = sorted(hints)
    covered = N_start - 1
    table = sieve_primes(max(pairs[-1][0], 2))
    for N, t in pairs:
        if N > covered + 1:
            raise ChainGapError(covered + 1, N - 1)
        if 3 * t < N:
            raise ChainGapError(N, N)
        cert = greedy_result(N, t, GreedyConfig(variant), table).certificate
        report = verify_subfactorization(cert, table)
        if not report.accepted:
            raise ChainGapError(N, N)
        covered = max(covered, 3 * t)
    if covered < N_end:
        raise ChainGapError(covered + 1, N_end)
    return pairs
