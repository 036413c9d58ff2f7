"""
Linear and integer programming descriptions of M(N, t).

M(N, t) is the largest number of factors >= t in a subfactorization of N!.
Rows are primes p with capacity nu_p(N!), columns are candidate factors j with
coefficients nu_p(j), and the objective maximises sum_j m_j. The LP relaxation
bounds M(N, t) from above once its dual weights pass the exact verifier;
floored primal solutions plus a greedy pass over the leftover primes bound it
from below.
"""
import logging
import math
import re
import time
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from src.egs.certify import (
    BoundRecord,
    Certificate,
    DualCertificate,
    VerificationReport,
    dual_constraint_lhs,
    format_certificate,
    verify_dual,
    verify_subfactorization,
)
from src.egs.errors import DomainError, GreedyResidualError, ResourceLimitError, VerificationError
from src.egs.greedy import greedy_result, large_phase, pack_residual, search_t
from src.egs.interval import fraction_str
from src.egs.ntheory import (
    PrimeTable,
    factorize,
    largest_prime_factors,
    legendre_valuation,
    legendre_valuations,
    sieve_primes,
    smallest_prime_factors,
)
from src.services.settings import get_settings
from src.utils.constants import SPLIT_EXAMPLE, SPLIT_PRINTED_OFFSETS
from src.utils.helpers import parallel_map

logger = logging.getLogger(__name__)

# Dual weights and primal values are snapped to this dyadic grid before exact checks.
_GRID = 1 << 40
_INT_TOL = 1e-7
# Models up to this many matrix cells are solved by the exact rational simplex.
_EXACT_CELLS = 20_000
_DEGENERATE_STREAK = 50


class ColumnPolicy(str, Enum):
    J = "J"
    interval = "interval"
    smooth = "smooth"


class LPStatus(str, Enum):
    optimal = "optimal"
    feasible = "feasible"
    infeasible = "infeasible"


class IPEngine(str, Enum):
    milp = "milp"
    bnb = "bnb"


@dataclass(eq=False)
class LPModel:
    N: int
    t: int
    policy: ColumnPolicy
    columns: np.ndarray
    primes: np.ndarray
    capacity: np.ndarray
    matrix: sparse.csr_matrix

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    def entries(self) -> Dict[Tuple[int, int], int]:
        """Non-zero coefficients keyed by (p, j)."""
        coo = self.matrix.tocoo()
        return {
            (int(self.primes[r]), int(self.columns[c])): int(v)
            for r, c, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())
            if v
        }

    def same_as(self, other: "LPModel") -> bool:
        return (
            (self.N, self.t, self.policy) == (other.N, other.t, other.policy)
            and np.array_equal(self.columns, other.columns)
            and np.array_equal(self.primes, other.primes)
            and np.array_equal(self.capacity, other.capacity)
            and self.entries() == other.entries()
        )

    @property
    def certifies_upper(self) -> bool:
        """Whether a verified dual of this model bounds M(N, t) from above."""
        if self.policy == ColumnPolicy.J:
            return True
        return self.policy == ColumnPolicy.interval and 2 * self.t <= self.N


@dataclass
class LPSolution:
    N: int
    t: int
    status: LPStatus
    primal: Dict[int, Fraction] = field(default_factory=dict)
    dual: Dict[int, Fraction] = field(default_factory=dict)
    objective: Fraction = Fraction(0)
    objective_float: float = 0.0
    upper_bound: Optional[int] = None
    dual_report: Optional[VerificationReport] = None
    exact: bool = False

    @property
    def primal_value(self) -> Fraction:
        return sum(self.primal.values(), Fraction(0))

    def dual_certificate(self) -> DualCertificate:
        return DualCertificate(N=self.N, t=self.t, weights=dict(self.dual), claimed_value=self.objective)


@dataclass
class ExactLPResult:
    x: List[Fraction]
    y: List[Fraction]
    objective: Fraction
    pivots: int


@dataclass
class IPLimits:
    node_limit: Optional[int] = None
    time_limit: Optional[float] = None
    threads: Optional[int] = None


@dataclass
class IPResult:
    N: int
    t: int
    lower: int
    upper: int
    nodes: int
    engine: IPEngine
    certificate: Optional[Certificate] = None

    @property
    def exact(self) -> bool:
        return self.lower == self.upper

    @property
    def value(self) -> Optional[int]:
        return self.lower if self.exact else None


# ---------------------------------------------------------------------------
# Model construction
# ---------------------------------------------------------------------------

def _interval_entries(lo: int, hi: int, primes: np.ndarray):
    """Coordinates (row, offset, nu_p(j)) for every j in [lo, hi] divisible by a row prime."""
    rows, cols, vals = [], [], []
    for idx, p in enumerate(primes.tolist()):
        first = -(-lo // p) * p
        if first > hi:
            continue
        js = np.arange(first, hi + 1, p, dtype=np.int64)
        v = np.ones(len(js), dtype=np.int64)
        pk = p * p
        while pk <= hi:
            v += (js % pk == 0)
            pk *= p
        rows.append(np.full(len(js), idx, dtype=np.int64))
        cols.append(js - lo)
        vals.append(v)
    if not rows:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def minimal_columns(N: int, t: int, table: PrimeTable, ceiling: Optional[int] = None) -> List[Tuple[int, Dict[int, int]]]:
    """
    J_{t,N}: each j >= t built from primes <= N whose largest proper divisor is < t.

    Such j are q*d with d < t and q <= P-(d) prime, so they are enumerated
    directly from d with their factorisations attached.
    """
    ceiling = ceiling or get_settings()["lp_column_ceiling"]
    spf = smallest_prime_factors(max(t, 2))
    plan = []
    total = 0
    for d in range(1, t):
        top = N if d == 1 else min(int(spf[d]), N)
        low = -(-t // d)
        if low > top:
            continue
        n = table.count_range(low - 1, top)
        if n:
            plan.append((d, low, top))
            total += n
        if total > ceiling:
            raise ResourceLimitError(
                f"J_{{t,N}} for N={N}, t={t} has more than {ceiling} columns; use the interval policy"
            )
    out = []
    for d, low, top in plan:
        base = factorize(d, spf) if d > 1 else {}
        for q in table.primes_in(low - 1, top).tolist():
            fac = dict(base)
            fac[q] = fac.get(q, 0) + 1
            out.append((q * d, fac))
    out.sort(key=lambda column: column[0])
    return out


def build_model(N: int, t: int, policy: ColumnPolicy = ColumnPolicy.interval,
                table: Optional[PrimeTable] = None, smooth_bound: Optional[int] = None,
                capacity: Optional[Dict[int, int]] = None) -> LPModel:
    """
    Build the M(N, t) program for a column policy.

    Args:
        N: Factorial order
        t: Factor threshold (2 <= t <= N)
        policy: J (minimal factors), interval [t, N] or smooth (P+(j) <= smooth_bound)
        table: Prime table with limit >= N
        smooth_bound: Largest row prime for the smooth policy (default isqrt(N))
        capacity: Row capacities overriding nu_p(N!), keyed by prime

    Returns:
        LPModel
    """
    policy = ColumnPolicy(policy)
    if not 2 <= t <= N:
        raise DomainError(f"need 2 <= t <= N (N={N}, t={t})")
    table = table or sieve_primes(max(N, 2))
    ceiling = get_settings()["lp_column_ceiling"]
    started = time.time()
    if policy == ColumnPolicy.J:
        primes = table.primes_in(1, N)
        cols = minimal_columns(N, t, table, ceiling)
        index = {p: i for i, p in enumerate(primes.tolist())}
        rows, cidx, vals = [], [], []
        for c, (_, fac) in enumerate(cols):
            for p, k in fac.items():
                rows.append(index[p])
                cidx.append(c)
                vals.append(k)
        columns = np.array([j for j, _ in cols], dtype=np.int64)
        rows, cidx, vals = (np.array(a, dtype=np.int64) for a in (rows, cidx, vals))
    else:
        if N - t + 1 > ceiling:
            raise ResourceLimitError(f"{N - t + 1} columns exceed the ceiling {ceiling}")
        bound = N if policy == ColumnPolicy.interval else (smooth_bound or math.isqrt(N))
        primes = table.primes_in(1, min(bound, N))
        rows, cidx, vals = _interval_entries(t, N, primes)
        columns = np.arange(t, N + 1, dtype=np.int64)
        if policy == ColumnPolicy.smooth:
            lpf = largest_prime_factors(N)[t:N + 1]
            keep = lpf <= bound
            remap = np.cumsum(keep) - 1
            mask = keep[cidx]
            rows, cidx, vals = rows[mask], remap[cidx[mask]], vals[mask]
            columns = columns[keep]
    if capacity is None:
        cap = legendre_valuations(N, primes).astype(np.int64)
    else:
        cap = np.array([capacity.get(p, 0) for p in primes.tolist()], dtype=np.int64)
    matrix = sparse.csr_matrix((vals, (rows, cidx)), shape=(len(primes), len(columns)), dtype=np.int64)
    logger.debug("[LP] model N=%d t=%d policy=%s rows=%d cols=%d nnz=%d (%.2fs)",
                 N, t, policy.value, len(primes), len(columns), matrix.nnz, time.time() - started)
    return LPModel(N, t, policy, columns, primes, cap, matrix)


# ---------------------------------------------------------------------------
# Exact rational simplex
# ---------------------------------------------------------------------------

def _pivot(T: List[List[Fraction]], z: List[Fraction], r: int, k: int) -> None:
    piv = T[r][k]
    if piv != 1:
        T[r] = [v / piv for v in T[r]]
    row = T[r]
    nz = [j for j, v in enumerate(row) if v]
    for i, other in enumerate(T):
        f = other[k]
        if i != r and f:
            for j in nz:
                other[j] -= f * row[j]
    f = z[k]
    if f:
        for j in nz:
            z[j] -= f * row[j]


def exact_simplex(A: Sequence[Sequence], b: Sequence, c: Sequence,
                  degenerate_limit: int = _DEGENERATE_STREAK) -> ExactLPResult:
    """
    Maximise c.x subject to A x <= b, x >= 0 (with b >= 0) over the rationals.

    Dantzig's rule picks the entering column until degenerate_limit consecutive
    degenerate pivots occur; from then on Bland's rule is used, which cannot cycle.
    The dual values y of the slack rows satisfy A^T y >= c and b.y = objective.
    """
    m, n = len(A), len(c)
    if any(Fraction(v) < 0 for v in b):
        raise DomainError("exact simplex needs b >= 0")
    T = [
        [Fraction(v) for v in A[i]] + [Fraction(int(i == k)) for k in range(m)] + [Fraction(b[i])]
        for i in range(m)
    ]
    z = [-Fraction(v) for v in c] + [Fraction(0)] * (m + 1)
    basis = list(range(n, n + m))
    bland, streak, pivots = False, 0, 0
    while True:
        entering = [k for k in range(n + m) if z[k] < 0]
        if not entering:
            break
        k = entering[0] if bland else min(entering, key=lambda j: (z[j], j))
        candidates = [i for i in range(m) if T[i][k] > 0]
        if not candidates:
            raise VerificationError("LP relaxation is unbounded")
        r = min(candidates, key=lambda i: (T[i][-1] / T[i][k], basis[i]))
        streak = streak + 1 if T[r][-1] == 0 else 0
        if not bland and streak > degenerate_limit:
            logger.debug("[LP] %d degenerate pivots; switching to Bland's rule", streak)
            bland = True
        _pivot(T, z, r, k)
        basis[r] = k
        pivots += 1
    x = [Fraction(0)] * n
    for i, v in enumerate(basis):
        if v < n:
            x[v] = T[i][-1]
    return ExactLPResult(x=x, y=z[n:n + m], objective=z[-1], pivots=pivots)


# ---------------------------------------------------------------------------
# LP solving
# ---------------------------------------------------------------------------

def _column_dual_report(model: LPModel, y: Dict[int, Fraction], value: Fraction) -> VerificationReport:
    """Exact check of sum_p y_p nu_p(j) >= 1 on every model column."""
    coo = model.matrix.tocoo()
    lhs = [Fraction(0)] * model.shape[1]
    for r, c, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()):
        lhs[c] += y.get(int(model.primes[r]), Fraction(0)) * v
    errors = [
        f"constraint fails at j={int(model.columns[c])}: sum = {s} < 1"
        for c, s in enumerate(lhs) if s < 1
    ][:20]
    errors += [f"weight of {p} is negative" for p, w in y.items() if w < 0]
    accepted = not errors
    bound = f"M({model.N},{model.t}) <= {math.floor(value)}" if accepted else ""
    if accepted and value < model.N:
        bound += f"; t({model.N}) < {model.t}"
    return VerificationReport(
        kind="dual-columns", N=model.N, t=model.t, accepted=accepted, count=math.floor(value),
        bound_implied=bound, value=fraction_str(value), proves_t_bound=accepted and value < model.N,
        errors=errors,
    )


def _solve_exact(model: LPModel) -> LPSolution:
    dense = model.matrix.toarray().tolist()
    result = exact_simplex(dense, model.capacity.tolist(), [1] * model.shape[1])
    primal = {int(j): v for j, v in zip(model.columns.tolist(), result.x) if v}
    dual = {int(p): w for p, w in zip(model.primes.tolist(), result.y)}
    solution = LPSolution(
        model.N, model.t, LPStatus.optimal, primal=primal, dual=dual,
        objective=result.objective, objective_float=float(result.objective), exact=True,
    )
    if model.policy == ColumnPolicy.J:
        report = _column_dual_report(model, dual, result.objective)
    elif model.certifies_upper:
        report = verify_dual(solution.dual_certificate())
        if not report.accepted:
            # non-monotone optimal weights: fall back to the monotone dual program
            return _solve_highs(model, monotone=True)
    else:
        return solution
    solution.dual_report = report
    if report.accepted:
        solution.upper_bound = math.floor(result.objective)
    return solution


def _highs_primal(model: LPModel):
    res = linprog(-np.ones(model.shape[1]), A_ub=model.matrix, b_ub=model.capacity,
                  bounds=(0, None), method="highs")
    if res.status != 0:
        logger.warning("[LP] HiGHS status %d: %s", res.status, res.message)
    return res


def _exact_primal(model: LPModel, x: np.ndarray) -> Dict[int, Fraction]:
    """Snap x down to the dyadic grid and shrink it until every row fits exactly."""
    k = np.floor(np.clip(x, 0, None) * _GRID).astype(np.int64)
    usage = model.matrix @ k
    limit = model.capacity * _GRID
    over = np.flatnonzero(usage > limit)
    scale = Fraction(1)
    if len(over):
        scale = min(Fraction(int(limit[i]), int(usage[i])) for i in over)
    return {int(j): Fraction(int(v), _GRID) * scale for j, v in zip(model.columns.tolist(), k.tolist()) if v}


def _monotone_dual(model: LPModel) -> np.ndarray:
    """Solve the dual program with explicit w_p <= w_q rows for consecutive primes."""
    rows, cols = model.shape
    steps = sparse.diags([np.ones(rows - 1), -np.ones(rows - 1)], [0, 1], shape=(rows - 1, rows))
    A_ub = sparse.vstack([-model.matrix.T.astype(float), steps]).tocsr()
    b_ub = np.concatenate([-np.ones(cols), np.zeros(rows - 1)])
    res = linprog(model.capacity.astype(float), A_ub=A_ub, b_ub=b_ub, bounds=(0, None), method="highs")
    if res.status != 0:
        raise VerificationError(f"monotone dual program failed: {res.message}")
    return res.x


def round_dual(model: LPModel, w: np.ndarray) -> DualCertificate:
    """
    Turn floating dual weights into an exact monotone certificate.

    Weights are rounded up to the dyadic grid and made weakly increasing by a
    running maximum; any remaining deficit in sum_p w_p nu_p(j) >= 1 is added to
    every weight, which keeps the order and lifts each constraint by at least
    that amount.
    """
    N, t = model.N, model.t
    scaled = np.ceil(np.clip(w, 0, None) * _GRID).astype(np.int64)
    scaled = np.maximum.accumulate(scaled)
    primes = model.primes
    weights = {int(p): Fraction(int(s), _GRID) for p, s in zip(primes.tolist(), scaled.tolist())}
    D, lhs = dual_constraint_lhs(N, t, weights, primes)
    low = int(lhs[t:N + 1].min())
    if low < D:
        shift = Fraction(D - low, D)
        weights = {p: v + shift for p, v in weights.items()}
    value = sum((weights[int(p)] * int(v) for p, v in zip(primes.tolist(), model.capacity.tolist())), Fraction(0))
    return DualCertificate(N=N, t=t, weights={p: v for p, v in weights.items() if v}, claimed_value=value)


def _solve_highs(model: LPModel, monotone: bool = False) -> LPSolution:
    res = _highs_primal(model)
    if res.status != 0 or res.x is None:
        return LPSolution(model.N, model.t, LPStatus.infeasible)
    objective_float = float(-res.fun)
    primal = _exact_primal(model, res.x)
    solution = LPSolution(model.N, model.t, LPStatus.feasible, primal=primal,
                          objective=sum(primal.values(), Fraction(0)), objective_float=objective_float)
    if not model.certifies_upper or 2 * model.t > model.N:
        return solution
    w = _monotone_dual(model) if monotone else -np.asarray(res.ineqlin.marginals)
    dual = round_dual(model, w)
    report = verify_dual(dual)
    if not monotone and (not report.accepted or math.floor(dual.claimed_value) > math.floor(objective_float + 1e-6)):
        logger.info("[LP] weights for N=%d t=%d not monotone enough; re-solving with order rows", model.N, model.t)
        return _solve_highs(model, monotone=True)
    solution.dual = dual.weights
    solution.dual_report = report
    if report.accepted:
        solution.objective = dual.claimed_value
        solution.upper_bound = math.floor(dual.claimed_value)
        solution.status = LPStatus.optimal
    return solution


def solve_lp(model: LPModel, exact: Optional[bool] = None, monotone: bool = False) -> LPSolution:
    """
    Solve the LP relaxation and certify its dual in exact arithmetic.

    Small models go through the rational simplex; larger ones through HiGHS
    followed by dual rounding. upper_bound is only set when the dual weights
    were verified exactly.
    """
    rows, cols = model.shape
    if cols == 0 or rows == 0:
        raise DomainError("empty LP model")
    if exact is None:
        exact = rows * cols <= _EXACT_CELLS
    started = time.time()
    solution = _solve_exact(model) if exact else _solve_highs(model, monotone)
    logger.info("[LP] N=%d t=%d policy=%s objective=%.5f upper=%s (%.2fs)", model.N, model.t,
                model.policy.value, solution.objective_float, solution.upper_bound, time.time() - started)
    return solution


def lp_upper(N: int, t: int, table: Optional[PrimeTable] = None) -> LPSolution:
    """LP bound on M(N, t) using interval columns when t <= N/2 and J_{t,N} otherwise."""
    policy = ColumnPolicy.interval if 2 * t <= N else ColumnPolicy.J
    return solve_lp(build_model(N, t, policy, table))


# ---------------------------------------------------------------------------
# Lower bounds from the LP
# ---------------------------------------------------------------------------

def _floor_counts(model: LPModel, x: np.ndarray) -> np.ndarray:
    """Integer parts of x, reduced where float noise pushed a row over capacity."""
    k = np.floor(np.clip(x, 0, None) + _INT_TOL).astype(np.int64)
    while True:
        usage = model.matrix @ k
        over = np.flatnonzero(usage > model.capacity)
        if not len(over):
            return k
        for r in over.tolist():
            row = model.matrix.getrow(r)
            cols = row.indices[k[row.indices] > 0]
            if len(cols):
                k[cols[np.argmax(k[cols])]] -= 1


def _round_up(model: LPModel, x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Add one more copy of each fractional column that still fits, largest fractional part first."""
    csc = model.matrix.tocsc()
    leftover = model.capacity - model.matrix @ k
    frac = np.clip(x, 0, None) - k
    for c in np.argsort(-frac, kind="stable").tolist():
        if frac[c] <= _INT_TOL:
            break
        rows = csc.indices[csc.indptr[c]:csc.indptr[c + 1]]
        need = csc.data[csc.indptr[c]:csc.indptr[c + 1]]
        if np.all(leftover[rows] >= need):
            leftover[rows] -= need
            k[c] += 1
    return k


def _counts_to_factors(model: LPModel, k: np.ndarray) -> Counter:
    return Counter({int(j): int(v) for j, v in zip(model.columns.tolist(), k.tolist()) if v})


def _explicit(counts: Counter) -> List[Tuple[int, int]]:
    return [(mult, f) for f, mult in sorted(counts.items(), reverse=True) if mult]


def floor_residuals_lower(N: int, t: int, table: Optional[PrimeTable] = None) -> Certificate:
    """
    Floor the LP optimum over interval columns, then greedily pack the leftover primes.

    The returned certificate always passes verify_subfactorization as a valid
    subfactorization; it proves t(N) >= t when its count reaches N.
    """
    table = table or sieve_primes(max(N, 2))
    model = build_model(N, t, ColumnPolicy.interval, table)
    res = _highs_primal(model)
    if res.x is None:
        raise VerificationError(f"LP for N={N} t={t} returned no primal point")
    k = _round_up(model, res.x, _floor_counts(model, res.x))
    leftover = dict(zip(model.primes.tolist(), (model.capacity - model.matrix @ k).tolist()))
    counts = _counts_to_factors(model, k)
    counts.update(pack_residual(t, leftover))
    cert = Certificate(N=N, t=t, explicit_factors=_explicit(counts))
    report = verify_subfactorization(cert, table)
    if not report.bound_implied:
        raise VerificationError(f"floor+residuals certificate rejected: {report.errors[:3]}")
    logger.info("[LP] floor+residuals N=%d t=%d count=%d (LP %.3f)", N, t, report.count, -res.fun)
    return cert


def smooth_lower(N: int, t: int, table: Optional[PrimeTable] = None) -> Certificate:
    """
    Allocate primes above sqrt(N) greedily, then floor an LP over sqrt(N)-smooth columns.
    """
    if N < 100:
        raise DomainError("smooth factorization needs N >= 100")
    table = table or sieve_primes(N)
    M = math.isqrt(N)
    while True:
        try:
            blocks, _, residual = large_phase(N, t, M, table)
            break
        except GreedyResidualError as exc:
            if M >= N:
                raise
            logger.info("[LP] %s; smooth bound raised to %d", exc, 2 * M)
            M = min(2 * M, N)
    model = build_model(N, t, ColumnPolicy.smooth, table, smooth_bound=M, capacity=residual)
    counts: Counter = Counter()
    leftover = dict(residual)
    if model.shape[1]:
        res = _highs_primal(model)
        if res.x is not None:
            k = _floor_counts(model, res.x)
            counts = _counts_to_factors(model, k)
            leftover = dict(zip(model.primes.tolist(), (model.capacity - model.matrix @ k).tolist()))
    counts.update(pack_residual(t, leftover, M))
    cert = Certificate(N=N, t=t, explicit_factors=_explicit(counts), prime_blocks=blocks)
    report = verify_subfactorization(cert, table)
    if not report.bound_implied:
        raise VerificationError(f"smooth certificate rejected: {report.errors[:3]}")
    logger.info("[LP] smooth N=%d t=%d M=%d count=%d", N, t, M, report.count)
    return cert


@dataclass
class SplitReport:
    """M(N, t) bracketed by a verified LP dual from above and floor+residuals from below."""
    N: int
    t: int
    lp_objective: Fraction
    upper: Optional[int]
    lower: int

    @property
    def consistent(self) -> bool:
        return self.upper is not None and self.lower == self.upper

    def matching_offsets(self, offsets: Sequence[int] = SPLIT_PRINTED_OFFSETS) -> List[int]:
        """Offsets d for which N + d is compatible with both bounds."""
        if self.upper is None:
            return []
        return [d for d in offsets if self.lower <= self.N + d <= self.upper]


def split_consistency(N: int = SPLIT_EXAMPLE[0], t: int = SPLIT_EXAMPLE[1],
                      table: Optional[PrimeTable] = None) -> SplitReport:
    table = table or sieve_primes(max(N, 2))
    upper = lp_upper(N, t, table)
    lower = verify_subfactorization(floor_residuals_lower(N, t, table), table).count
    report = SplitReport(N, t, upper.objective, upper.upper_bound, lower)
    logger.info("[LP] split N=%d t=%d: %d <= M <= %s (LP %.5f), printed offsets matching: %s",
                N, t, lower, upper.upper_bound, float(upper.objective), report.matching_offsets())
    return report


# ---------------------------------------------------------------------------
# Integer programming
# ---------------------------------------------------------------------------

@dataclass
class _Node:
    lower: np.ndarray
    upper: np.ndarray
    bound: float = math.inf


def _relax(model: LPModel, node: _Node):
    res = linprog(-np.ones(model.shape[1]), A_ub=model.matrix, b_ub=model.capacity,
                  bounds=np.column_stack((node.lower, node.upper)), method="highs")
    return res if res.status == 0 else None


def _branch_column(x: np.ndarray, columns: np.ndarray) -> Optional[int]:
    """Most fractional variable, ties broken towards larger j."""
    frac = x - np.floor(x)
    cand = np.flatnonzero((frac > _INT_TOL) & (frac < 1 - _INT_TOL))
    if not len(cand):
        return None
    score = np.abs(frac[cand] - 0.5)
    ties = cand[score <= score.min() + 1e-12]
    return int(ties[np.argmax(columns[ties])])


def _children(node: _Node, k: int, value: float, bound: float) -> Tuple[_Node, _Node]:
    down_upper = node.upper.copy()
    down_upper[k] = math.floor(value)
    up_lower = node.lower.copy()
    up_lower[k] = math.floor(value) + 1
    return _Node(node.lower, down_upper, bound), _Node(up_lower, node.upper, bound)


def _integral_value(model: LPModel, x: np.ndarray) -> Optional[Tuple[int, np.ndarray]]:
    k = np.round(x).astype(np.int64)
    if np.any(k < 0) or np.any(model.matrix @ k > model.capacity):
        return None
    return int(k.sum()), k


def _bnb_search(args) -> Tuple[int, Optional[np.ndarray], int, float]:
    """Depth-first branch and bound below one node; returns (best, x, nodes, open bound)."""
    model, root, incumbent, node_limit = args
    best, best_x = incumbent, None
    stack = [root]
    explored = 0
    while stack and explored < node_limit:
        node = stack.pop()
        if node.bound <= best:
            continue
        explored += 1
        res = _relax(model, node)
        if res is None:
            continue
        bound = math.floor(-res.fun + _INT_TOL)
        if bound <= best:
            continue
        k = _branch_column(res.x, model.columns)
        if k is None:
            found = _integral_value(model, res.x)
            if found and found[0] > best:
                best, best_x = found
            continue
        down, up = _children(node, k, res.x[k], bound)
        stack.extend([down, up])
    open_bound = max((n.bound for n in stack if n.bound > best), default=-math.inf)
    return best, best_x, explored, open_bound


def _bnb(model: LPModel, incumbent: int, node_limit: int, threads: int) -> Tuple[int, Optional[np.ndarray], int, int]:
    cols = model.shape[1]
    root = _Node(np.zeros(cols), np.full(cols, np.inf))
    frontier = [root]
    best, best_x, nodes = incumbent, None, 0
    # breadth-first split until there is one subtree per worker
    while frontier and len(frontier) < threads and nodes < node_limit:
        node = frontier.pop(0)
        nodes += 1
        res = _relax(model, node)
        if res is None:
            continue
        bound = math.floor(-res.fun + _INT_TOL)
        if bound <= best:
            continue
        k = _branch_column(res.x, model.columns)
        if k is None:
            found = _integral_value(model, res.x)
            if found and found[0] > best:
                best, best_x = found
            continue
        frontier.extend(_children(node, k, res.x[k], bound))
    if not frontier:
        return best, best_x, nodes, best
    per_tree = max(1, (node_limit - nodes) // len(frontier))
    results = parallel_map(_bnb_search, [(model, n, best, per_tree) for n in frontier], threads,
                           executor="thread")
    open_bound = best
    for value, x, explored, pending in results:
        nodes += explored
        if value > best or (value == best and best_x is None and x is not None):
            best, best_x = value, x
        if pending != -math.inf:
            open_bound = max(open_bound, int(pending))
    return best, best_x, nodes, max(best, open_bound)


def ip_exact(N: int, t: int, limits: Optional[IPLimits] = None, engine: IPEngine = IPEngine.milp,
             table: Optional[PrimeTable] = None) -> IPResult:
    """
    Exact M(N, t) by integer programming over J_{t,N}.

    If the node limit stops the search, lower < upper brackets the value.
    """
    config = get_settings()
    limits = limits or IPLimits()
    engine = IPEngine(engine)
    if N > config["ip_ceiling"]:
        raise ResourceLimitError(f"N={N} exceeds the integer programming ceiling {config['ip_ceiling']}")
    if t < 2:
        raise DomainError("M(N, t) is unbounded for t < 2")
    if t > N:
        raise DomainError(f"need t <= N (N={N}, t={t})")
    table = table or sieve_primes(max(N, 2))
    node_limit = limits.node_limit or config["ip_node_limit"]
    model = build_model(N, t, ColumnPolicy.J, table)
    greedy = greedy_result(N, t, table=table)
    lower, cert = greedy.count, greedy.certificate
    started = time.time()
    if engine == IPEngine.milp:
        options = {"node_limit": node_limit, "mip_rel_gap": 0.0}
        if limits.time_limit:
            options["time_limit"] = limits.time_limit
        cols = model.shape[1]
        res = milp(-np.ones(cols), integrality=np.ones(cols), bounds=Bounds(0, np.inf),
                   constraints=LinearConstraint(model.matrix, -np.inf, model.capacity), options=options)
        nodes = int(res.mip_node_count or 0)
        best_x = None
        if res.x is not None:
            found = _integral_value(model, res.x)
            if found and found[0] > lower:
                lower, best_x = found
        if res.status == 0:
            upper = max(lower, int(round(-res.fun)))
        else:
            dual_bound = res.mip_dual_bound if res.mip_dual_bound is not None else -math.inf
            upper = max(lower, math.floor(-dual_bound + _INT_TOL)) if math.isfinite(dual_bound) \
                else max(lower, lp_upper(N, t, table).upper_bound or lower)
    else:
        best, best_x, nodes, upper = _bnb(model, lower, node_limit, limits.threads or config["threads"])
        if best > lower:
            lower = best
        else:
            best_x = None
        upper = max(upper, lower)
    if best_x is not None:
        cert = Certificate(N=N, t=t, explicit_factors=_explicit(_counts_to_factors(model, best_x)))
    logger.info("[IP] N=%d t=%d engine=%s M in [%d, %d] nodes=%d (%.2fs)",
                N, t, engine.value, lower, upper, nodes, time.time() - started)
    return IPResult(N, t, lower, upper, nodes, engine, cert)


def brute_force_M(N: int, t: int) -> int:
    """
    Exhaustive M(N, t) over multisets of divisors of N!, memoised on the leftover exponents.

    An independent oracle for N <= 12.
    """
    if N > 12:
        raise DomainError("brute force is limited to N <= 12")
    if t < 2:
        raise DomainError("M(N, t) is unbounded for t < 2")
    primes = [p for p in (2, 3, 5, 7, 11) if p <= N]
    caps = tuple(legendre_valuation(N, p) for p in primes)

    def value(e) -> int:
        return math.prod(p ** k for p, k in zip(primes, e))

    vectors = [()]
    for cap in caps:
        vectors = [v + (k,) for v in vectors for k in range(cap + 1)]
    # only divisors >= t with no proper divisor >= t are needed
    minimal = []
    for e in vectors:
        v = value(e)
        if v >= t and all(v // p < t for p, k in zip(primes, e) if k):
            minimal.append(e)
    memo: Dict[Tuple[int, ...], int] = {}

    def best(state: Tuple[int, ...]) -> int:
        if state in memo:
            return memo[state]
        out = 0
        for e in minimal:
            if all(a <= s for a, s in zip(e, state)):
                out = max(out, 1 + best(tuple(s - a for a, s in zip(e, state))))
        memo[state] = out
        return out

    return best(caps)


# ---------------------------------------------------------------------------
# Exact t(N) for small N
# ---------------------------------------------------------------------------

def t_exact(N: int, table: Optional[PrimeTable] = None) -> BoundRecord:
    """
    Pin t(N) by combining the greedy lower bound, LP dual upper bounds and
    integer programming; both directions come with exact certificates.
    """
    config = get_settings()
    if N < 1:
        raise DomainError("N must be positive")
    if N > config["ip_ceiling"]:
        raise ResourceLimitError(f"N={N} exceeds the integer programming ceiling {config['ip_ceiling']}")
    table = table or sieve_primes(max(N, 2))
    lower, cert = search_t(N)
    lower_method = "greedy"
    t = lower + 1
    while True:
        if t > N:
            # (N!)^(1/N) <= N
            upper_method, dual_value = "trivial", None
            break
        if 2 * t <= N:
            lp = solve_lp(build_model(N, t, ColumnPolicy.interval, table))
            if lp.upper_bound is not None and lp.upper_bound < N:
                upper_method, dual_value = "lp-dual", fraction_str(lp.objective)
                break
        ip = ip_exact(N, t, table=table)
        if ip.lower >= N:
            lower, cert, lower_method = t, ip.certificate, "ip"
            t += 1
            continue
        if not ip.exact:
            return BoundRecord(N=N, lower=lower, lower_method=lower_method,
                               certificate=format_certificate(cert),
                               notes=[f"integer program for t={t} stopped with M in [{ip.lower}, {ip.upper}]"])
        upper_method, dual_value = "ip", None
        break
    return BoundRecord(N=N, lower=lower, lower_method=lower_method, upper=t - 1, upper_method=upper_method,
                       certificate=format_certificate(cert), dual_value=dual_value)


# ---------------------------------------------------------------------------
# CPLEX LP text format
# ---------------------------------------------------------------------------

_HEADER_RE = re.compile(r"^\\\s*EGS model N=(\d+) t=(\d+) policy=(\w+)")
_ROW_RE = re.compile(r"^\s*p(\d+):\s*(.*?)\s*<=\s*(-?\d+)\s*$")
_TERM_RE = re.compile(r"([+-]?)\s*(\d*)\s*m(\d+)")


def _wrap(terms: List[str], lead: str, width: int = 8) -> List[str]:
    lines = []
    for i in range(0, len(terms), width):
        chunk = " + ".join(terms[i:i + width])
        lines.append((lead if i == 0 else "   + ") + chunk)
    return lines or [lead]


def export_model(model: LPModel, stream: Optional[TextIO] = None, integer: bool = False) -> str:
    """Write the model in CPLEX LP format; rows without entries keep a zero term so they survive re-import."""
    csr = model.matrix.tocsr()
    lines = [f"\\ EGS model N={model.N} t={model.t} policy={model.policy.value}", "Maximize"]
    lines += _wrap([f"m{j}" for j in model.columns.tolist()], " obj: ")
    lines.append("Subject To")
    first = int(model.columns[0]) if len(model.columns) else 0
    for r, p in enumerate(model.primes.tolist()):
        start, end = csr.indptr[r], csr.indptr[r + 1]
        terms = [
            (f"{v} " if v != 1 else "") + f"m{int(model.columns[c])}"
            for c, v in zip(csr.indices[start:end].tolist(), csr.data[start:end].tolist())
        ] or [f"0 m{first}"]
        body = _wrap(terms, f" p{p}: ")
        body[-1] += f" <= {int(model.capacity[r])}"
        lines += body
    if integer:
        lines.append("General")
        lines += _wrap([f"m{j}" for j in model.columns.tolist()], " ")
    lines.append("End")
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return text


def import_model(source: Union[str, TextIO]) -> LPModel:
    """Read a model written by export_model."""
    text = source if isinstance(source, str) else source.read()
    raw = text.splitlines()
    header = _HEADER_RE.match(raw[0]) if raw else None
    if not header:
        raise DomainError("missing EGS model header comment")
    N, t, policy = int(header.group(1)), int(header.group(2)), ColumnPolicy(header.group(3))
    # join continuation lines onto their statement
    statements: List[str] = []
    for line in raw[1:]:
        if line.startswith("   + ") and statements:
            statements[-1] += " " + line.strip()
        else:
            statements.append(line)
    section = None
    columns: List[int] = []
    rows: List[Tuple[int, List[Tuple[int, int]], int]] = []
    for line in statements:
        keyword = line.strip()
        if keyword in ("Maximize", "Subject To", "General", "End"):
            section = keyword
            continue
        if section == "Maximize":
            columns = [int(j) for j in re.findall(r"m(\d+)", keyword)]
        elif section == "Subject To":
            match = _ROW_RE.match(line)
            if not match:
                raise DomainError(f"cannot parse constraint {line!r}")
            terms = [
                (int(j), int(coef or 1) * (-1 if sign == "-" else 1))
                for sign, coef, j in _TERM_RE.findall(match.group(2))
            ]
            rows.append((int(match.group(1)), terms, int(match.group(3))))
    index = {j: c for c, j in enumerate(columns)}
    r_idx, c_idx, vals = [], [], []
    for r, (_, terms, _) in enumerate(rows):
        for j, v in terms:
            if v:
                r_idx.append(r)
                c_idx.append(index[j])
                vals.append(v)
    matrix = sparse.csr_matrix(
        (np.array(vals, dtype=np.int64), (np.array(r_idx, dtype=np.int64), np.array(c_idx, dtype=np.int64))),
        shape=(len(rows), len(columns)), dtype=np.int64,
    )
    return LPModel(
        N, t, policy,
        columns=np.array(columns, dtype=np.int64),
        primes=np.array([p for p, _, _ in rows], dtype=np.int64),
        capacity=np.array([cap for _, _, cap in rows], dtype=np.int64),
        matrix=matrix,
    )
