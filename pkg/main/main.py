"""
Command-line entry point: every bound, certificate and table of the egs package.

Results go to stdout (text, json or csv); the invocation and progress logs go
to stderr. Exit codes: 0 verified, 1 not proven, 2 input error, 3 resource limit.
"""
import argparse
import json
import logging
import os
import shlex
import sys
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

# Add the project root directory to Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

# Import settings to configure environment variables first
from src import settings  # noqa: E402

from src.egs.certify import (  # noqa: E402
    Certificate,
    DualCertificate,
    format_certificate,
    parse_certificate,
    read_certificate,
    verify_dual,
    verify_subfactorization,
    write_certificate,
)
from src.egs.constants import compute_c0, compute_c1_suite  # noqa: E402
from src.egs.errors import (  # noqa: E402
    DomainError,
    EGSError,
    EXIT_INPUT_ERROR,
    EXIT_NOT_PROVEN,
    EXIT_VERIFIED,
)
from src.egs.greedy import (  # noqa: E402
    ChainMode,
    GreedyConfig,
    GreedyVariant,
    SearchStrategy,
    greedy_result,
    hint_chain,
    search_t,
    t1_exhaustive,
)
from src.egs.interval import fraction_str, to_fraction  # noqa: E402
from src.egs.linprog import (  # noqa: E402
    IPEngine,
    IPLimits,
    floor_residuals_lower,
    ip_exact,
    lp_upper,
    smooth_lower,
    t_exact,
)
from src.egs.rearrange import (  # noqa: E402
    Downset,
    FiniteMode,
    Rounding,
    TailKind,
    TailRule,
    check_asym_crit,
    check_finite_crit,
    quarter_certificate_check,
    read_weight_table,
    search_weights,
    t23_exact,
    t23_scan,
    write_weight_table,
)
from src.egs.repair import (  # noqa: E402
    build_params,
    kb_check,
    ledger,
    read_interval_list,
    reference_intervals,
    verify_intervals,
    verify_range,
    verify_range_auto,
)
from src.egs.upperbound import (  # noqa: E402
    UpperMode,
    best_upper,
    bound_curve_rows,
    tne_scan,
    upper_crit_test,
)
from src.utils.constants import (  # noqa: E402
    FORMAT_CSV,
    FORMAT_JSON,
    FORMAT_TEXT,
    REPAIR_A,
    REPAIR_K,
    REPAIR_L,
)
from src.utils.helpers import (  # noqa: E402
    parse_int,
    parse_threshold,
    rows_to_csv,
    save_csv_file,
    save_to_json_file,
)

logger = logging.getLogger("egs.cli")


@dataclass
class Outcome:
    """What a subcommand produced: a JSON-able summary, optional table rows and an exit code."""
    data: Dict[str, Any]
    text: str = ""
    rows: List[Dict[str, Any]] = field(default_factory=list)
    code: int = EXIT_VERIFIED


def _verified(flag: bool) -> int:
    return EXIT_VERIFIED if flag else EXIT_NOT_PROVEN


def _threshold(args) -> int:
    return parse_threshold(args.t, args.n, args.rounding)


def _save_certificate(cert, path: Optional[str]) -> None:
    if path:
        write_certificate(cert, path)
        logger.info("[CLI] certificate written to %s", path)


def _certificate_outcome(cert: Certificate, path: Optional[str], label: str) -> Outcome:
    """Write the certificate, read it back and verify the copy before reporting."""
    _save_certificate(cert, path)
    cert = read_certificate(path) if path else parse_certificate(format_certificate(cert))
    report = verify_subfactorization(cert)
    text = f"{label}: {report.bound_implied or 'not proven'} (count {report.count})"
    return Outcome(report.model_dump(), text, code=_verified(report.accepted))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_t_exact(args) -> Outcome:
    record = t_exact(args.n)
    cert = parse_certificate(record.certificate)
    path = args.out or f"t{args.n}.cert"
    _save_certificate(cert, path)
    accepted = verify_subfactorization(read_certificate(path)).accepted
    if record.exact:
        text = f"t({args.n}) = {record.lower}"
    else:
        text = f"t({args.n}) in [{record.lower}, {record.upper if record.upper is not None else '?'}]"
    data = record.model_dump(exclude={"certificate"})
    data["certificate_verified"] = accepted
    data["certificate_path"] = path
    return Outcome(data, text, code=_verified(record.exact and accepted))


def _greedy(args, variant: GreedyVariant) -> Outcome:
    t = _threshold(args)
    result = greedy_result(args.n, t, GreedyConfig(variant, M=args.m))
    outcome = _certificate_outcome(result.certificate, args.out, f"{variant.value} greedy N={args.n} t={t}")
    outcome.data.update({"large_count": result.large_count, "split_point": result.split_point,
                         "surplus_count": result.surplus})
    return outcome


def cmd_greedy(args) -> Outcome:
    return _greedy(args, GreedyVariant.standard)


def cmd_greedy_fast(args) -> Outcome:
    return _greedy(args, GreedyVariant.fast)


def cmd_t1(args) -> Outcome:
    t1 = t1_exhaustive(args.n, threads=args.threads, variant=GreedyVariant(args.variant))
    return Outcome({"N": args.n, "t1": t1}, f"t1({args.n}) = {t1}")


def cmd_search_t(args) -> Outcome:
    t, cert = search_t(args.n, SearchStrategy(args.strategy), GreedyVariant(args.variant))
    outcome = _certificate_outcome(cert, args.out, f"search N={args.n}")
    outcome.data["t"] = t
    return outcome


def _read_hints(path: str) -> List[tuple]:
    pairs = []
    with open(path, "r") as handle:
        for raw in handle:
            line = raw.split("#", 1)[0].split()
            if len(line) == 2:
                pairs.append((parse_int(line[0]), parse_int(line[1])))
    return pairs


def cmd_hints(args) -> Outcome:
    hints = _read_hints(args.hints) if args.hints else None
    chain = hint_chain(args.start, args.end, ChainMode(args.mode), hints, args.method)
    rows = [{"N": N, "t": t, "covers_to": 3 * t} for N, t in chain]
    if args.out and args.mode == ChainMode.generate.value:
        with open(args.out, "w") as handle:
            handle.writelines(f"{N} {t}\n" for N, t in chain)
    text = f"hint chain covers [{args.start}, {args.end}] with {len(chain)} pairs"
    return Outcome({"start": args.start, "end": args.end, "pairs": len(chain)}, text, rows)


def cmd_lp_upper(args) -> Outcome:
    t = _threshold(args)
    solution = lp_upper(args.n, t)
    if args.out:
        write_certificate(solution.dual_certificate(), args.out)
    data = {"N": args.n, "t": t, "objective": fraction_str(solution.objective),
            "objective_float": solution.objective_float, "upper_bound": solution.upper_bound,
            "exact": solution.exact}
    proves = solution.upper_bound is not None and solution.upper_bound < args.n
    data["proves_t_upper"] = proves
    text = f"M({args.n},{t}) <= {solution.upper_bound}" + (f", so t({args.n}) < {t}" if proves else "")
    return Outcome(data, text, code=_verified(solution.upper_bound is not None))


def cmd_lp_lower(args) -> Outcome:
    t = _threshold(args)
    build = smooth_lower if args.method == "smooth" else floor_residuals_lower
    return _certificate_outcome(build(args.n, t), args.out, f"{args.method} N={args.n} t={t}")


def cmd_ip(args) -> Outcome:
    t = _threshold(args)
    result = ip_exact(args.n, t, IPLimits(node_limit=args.node_limit, threads=args.threads), IPEngine(args.engine))
    if result.certificate is not None:
        _save_certificate(result.certificate, args.out)
    data = {"N": args.n, "t": t, "lower": result.lower, "upper": result.upper, "nodes": result.nodes,
            "engine": result.engine.value, "exact": result.exact}
    if result.exact:
        verdict = "t(N) >= t" if result.value >= args.n else "t(N) < t"
        text = f"M({args.n},{t}) = {result.value} ({verdict})"
    else:
        text = f"M({args.n},{t}) in [{result.lower}, {result.upper}]"
    return Outcome(data, text, code=_verified(result.exact))


def cmd_upper_crit(args) -> Outcome:
    if args.t is None:
        bound = best_upper(args.n)
        return Outcome({"N": args.n, "upper": bound}, f"t({args.n}) <= {bound}")
    t = _threshold(args)
    passed = upper_crit_test(args.n, t, UpperMode(args.mode))
    text = f"t({args.n}) < {t}" if passed else f"criterion inconclusive at t={t}"
    return Outcome({"N": args.n, "t": t, "mode": args.mode, "passed": passed}, text, code=_verified(passed))


def cmd_tne_scan(args) -> Outcome:
    report = tne_scan(args.lo, args.hi)
    rows = [row.as_row() for row in report.rows]
    text = f"N/e inequality on [{args.lo}, {args.hi}]: " + ("passed" if report.passed else f"fails at {report.failures[:10]}")
    return Outcome({"lo": args.lo, "hi": args.hi, "passed": report.passed, "failures": report.failures},
                   text, rows, _verified(report.passed))


def cmd_verify(args) -> Outcome:
    cert = read_certificate(args.cert)
    report = verify_dual(cert) if isinstance(cert, DualCertificate) else verify_subfactorization(cert)
    text = f"{report.kind}: {'accepted' if report.accepted else 'rejected'} {report.bound_implied}".rstrip()
    return Outcome(report.model_dump(), text, code=_verified(report.accepted))


def cmd_verify_dual(args) -> Outcome:
    cert = read_certificate(args.cert)
    if not isinstance(cert, DualCertificate):
        raise EGSError(f"{args.cert} is not a dual certificate")
    report = verify_dual(cert)
    text = f"dual: {'accepted' if report.accepted else 'rejected'} {report.bound_implied}".rstrip()
    return Outcome(report.model_dump(), text, code=_verified(report.accepted))


def cmd_rearrange_verify(args) -> Outcome:
    W = read_weight_table(args.weights)
    alpha = to_fraction(args.alpha)
    if args.n is None:
        report = check_asym_crit(W.downset, alpha, W)
    else:
        report = check_finite_crit(W.downset, alpha, args.n, W, args.L_exp, FiniteMode(args.mode),
                                   Rounding(args.rounding))
    scope = "all large N" if args.n is None else f"N={args.n}"
    text = f"t(N) >= {args.alpha} N for {scope}: " + ("verified" if report.passed else "; ".join(report.failures[:5]))
    return Outcome(report.to_json(), text, code=_verified(report.passed))


def cmd_rearrange_search(args) -> Outcome:
    if args.prime_bound is None:
        downset = Downset(tuple(range(1, args.limit + 1)))
    else:
        downset = Downset.smooth(args.prime_bound, args.limit)
    tail = TailRule(TailKind(args.tail), to_fraction(0), args.start)
    W = search_weights(downset, to_fraction(args.alpha), tail, N=args.n, L_exp=args.L_exp)
    scope = "all large N" if args.n is None else f"N={args.n}"
    data = {"alpha": args.alpha, "N": args.n, "tail": tail.describe(), "found": W is not None}
    if W is None:
        return Outcome(data, f"no weights for alpha={args.alpha} ({scope}) in this tail class", code=EXIT_NOT_PROVEN)
    if args.out:
        write_weight_table(W, args.out)
        data["weights_path"] = args.out
    data["weights"] = W.to_text()
    return Outcome(data, f"weights for t(N) >= {args.alpha} N ({scope}):\n{W.to_text().rstrip()}")


def cmd_t23(args) -> Outcome:
    if args.scan:
        lo, hi, step = args.scan
        rows = t23_scan(list(range(lo, hi + 1, step)), args.threads)
        below = all(4 * row["t23"] < row["N"] for row in rows)
        return Outcome({"count": len(rows), "all_below_quarter": below}, f"{len(rows)} values", rows)
    if args.n is None:
        raise DomainError("t23 needs --n or --scan")
    value = t23_exact(args.n)
    return Outcome({"N": args.n, "t23": value}, f"t23({args.n}) = {value}")


def cmd_quarter_cert(args) -> Outcome:
    report = quarter_certificate_check()
    text = (f"epsilon = {report.epsilon}, C = {report.C}, threshold = {report.threshold}: "
            + ("passed" if report.passed else "; ".join(report.failures + report.mismatches)))
    return Outcome(report.to_json(), text, code=_verified(report.passed))


def cmd_repair_verify(args) -> Outcome:
    if args.dump:
        params = build_params((args.n_lo, args.n_hi), args.t_rule, args.A, args.K, args.L)
        with open(args.dump, "w") as handle:
            handle.write(ledger(params).dump().model_dump_json(indent=2))
    if args.intervals or args.reference:
        intervals = read_interval_list(args.intervals) if args.intervals else reference_intervals()
        reports = verify_intervals(intervals, args.t_rule, args.A, args.K, args.L, threads=args.threads).reports
    elif args.auto:
        reports = verify_range_auto(args.n_lo, args.n_hi, args.t_rule, args.A, args.K, args.L,
                                    threads=args.threads).reports
    else:
        reports = [verify_range(args.n_lo, args.n_hi, args.t_rule, args.A, args.K, args.L)]
    rows = [r.to_json() for r in reports]
    ok = bool(reports) and all(r.verified for r in reports)
    lines = []
    for r in reports:
        lines.append(f"[{r.N_lo}, {r.N_hi if r.N_hi is not None else 'inf'}] {r.status}"
                     + (f" delta_sum={float(r.delta_ratio):.6f} delta alpha_sum={float(r.alpha_total):.6f}"
                        if r.delta_total is not None else ""))
        lines.extend(f"  note: {note}" for note in r.reference_notes)
    return Outcome({"intervals": len(reports), "verified": ok}, "\n".join(lines), rows, _verified(ok))


def cmd_kb_check(args) -> Outcome:
    report = kb_check(args.k_max)
    text = (f"prefix min {float(report.prefix_min):.6f} at K'={report.prefix_argmin}, "
            f"{report.blocks_checked} blocks: " + ("passed" if report.passed else "failed"))
    return Outcome(report.to_json(), text, report.rows if args.rows else [], _verified(report.passed))


def cmd_constants(args) -> Outcome:
    tol = to_fraction(args.tol)
    enclosures = [compute_c0(tol, threads=args.threads)]
    if args.which == "all":
        enclosures += list(compute_c1_suite(tol, accelerate=not args.no_accelerate, threads=args.threads))
    data = {enc.name: enc.to_json() for enc in enclosures}
    text = "\n".join(f"{enc.name} in [{float(enc.value.lo):.12f}, {float(enc.value.hi):.12f}] "
                     f"matches={enc.matches()}" for enc in enclosures)
    return Outcome(data, text)


def cmd_table(args) -> Outcome:
    values = [parse_int(v) for v in args.n_values]
    if args.kind == "bounds":
        rows = bound_curve_rows(values)
    elif args.kind == "greedy":
        rows = [{"N": N, "t_search": search_t(N)[0], "t1": t1_exhaustive(N, threads=args.threads)} for N in values]
    elif args.kind == "upper":
        rows = [{"N": N, "upper": best_upper(N)} for N in values]
    elif args.kind == "tne":
        rows = [row.as_row() for row in tne_scan(min(values), max(values)).rows]
    elif args.kind == "kb":
        rows = kb_check(max(values)).rows
    else:
        rows = t23_scan(values, args.threads)
    return Outcome({"kind": args.kind, "rows": len(rows)}, f"{len(rows)} rows", rows)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_nt(p: argparse.ArgumentParser, t_required: bool = True) -> None:
    p.add_argument("--n", type=parse_int, required=True)
    p.add_argument("--t", required=t_required, default=None, help='integer or "aN/b"')
    p.add_argument("--rounding", choices=["floor", "ceil"], default="floor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="egs", description="Bounds on t(N) with exact certificates")
    parser.add_argument("--format", choices=[FORMAT_TEXT, FORMAT_JSON, FORMAT_CSV], default=FORMAT_TEXT)
    parser.add_argument("--output", help="also write the json/csv result to this file")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, handler: Callable, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler)
        return p

    p = add("t-exact", cmd_t_exact, "pin t(N) for small N with certificates in both directions")
    p.add_argument("--n", type=parse_int, required=True)
    p.add_argument("--out", help="certificate path (default t<N>.cert in the working directory)")

    for name, handler in (("greedy", cmd_greedy), ("greedy-fast", cmd_greedy_fast)):
        p = add(name, handler, f"{name} subfactorization certificate")
        _add_nt(p)
        p.add_argument("--m", type=parse_int, default=None, help="split point M")
        p.add_argument("--out")

    p = add("t1", cmd_t1, "exhaustive t1(N)")
    p.add_argument("--n", type=parse_int, required=True)
    p.add_argument("--variant", choices=[v.value for v in GreedyVariant], default="standard")

    p = add("search-t", cmd_search_t, "heuristic or bisection search for a greedy lower bound")
    p.add_argument("--n", type=parse_int, required=True)
    p.add_argument("--strategy", choices=[s.value for s in SearchStrategy], default="heuristic")
    p.add_argument("--variant", choices=[v.value for v in GreedyVariant], default="standard")
    p.add_argument("--out")

    p = add("hints", cmd_hints, "generate or verify a hint chain for t(N) >= N/3")
    p.add_argument("--start", type=parse_int, required=True)
    p.add_argument("--end", type=parse_int, required=True)
    p.add_argument("--mode", choices=[m.value for m in ChainMode], default="generate")
    p.add_argument("--hints", help="file of 'N t' lines for verify mode")
    p.add_argument("--method", choices=["exhaustive", "heuristic"], default="heuristic")
    p.add_argument("--out")

    p = add("lp-upper", cmd_lp_upper, "LP relaxation upper bound with an exact dual certificate")
    _add_nt(p)
    p.add_argument("--out", help="write the dual certificate here")

    p = add("lp-lower", cmd_lp_lower, "LP-derived lower bound certificate")
    _add_nt(p)
    p.add_argument("--method", choices=["floor", "smooth"], default="floor")
    p.add_argument("--out")

    p = add("ip", cmd_ip, "exact M(N, t) by integer programming")
    _add_nt(p)
    p.add_argument("--engine", choices=[e.value for e in IPEngine], default="milp")
    p.add_argument("--node-limit", type=parse_int, default=None)
    p.add_argument("--out")

    p = add("upper-crit", cmd_upper_crit, "analytic criterion certifying t(N) < t")
    _add_nt(p, t_required=False)
    p.add_argument("--mode", choices=[m.value for m in UpperMode], default="exact-sieve")

    p = add("tne-scan", cmd_tne_scan, "t(N) < N/e on a range of N")
    p.add_argument("--lo", type=parse_int, default=80)
    p.add_argument("--hi", type=parse_int, default=5000)

    p = add("verify", cmd_verify, "verify a primal or dual certificate file")
    p.add_argument("cert")

    p = add("verify-dual", cmd_verify_dual, "verify a dual certificate file")
    p.add_argument("cert")

    p = add("rearrange-verify", cmd_rearrange_verify, "check a rearrangement weight table")
    p.add_argument("--weights", required=True)
    p.add_argument("--alpha", required=True)
    p.add_argument("--n", type=parse_int, default=None, help="finite criterion at this N")
    p.add_argument("--mode", choices=[m.value for m in FiniteMode], default="ledger")
    p.add_argument("--rounding", choices=[r.value for r in Rounding], default="ceil")
    p.add_argument("--L-exp", dest="L_exp", type=int, default=2)

    p = add("rearrange-search", cmd_rearrange_search, "LP search for a weight table in one tail class")
    p.add_argument("--limit", type=parse_int, required=True, help="downset elements up to this bound")
    p.add_argument("--prime-bound", dest="prime_bound", type=int, default=None,
                   help="keep only numbers free of larger primes")
    p.add_argument("--alpha", required=True)
    p.add_argument("--tail", choices=[TailKind.power2.value, TailKind.halving.value], required=True)
    p.add_argument("--start", type=int, required=True, help="r0 for power2, l0 for halving")
    p.add_argument("--n", type=parse_int, default=None, help="hold back the finite margins at this N")
    p.add_argument("--L-exp", dest="L_exp", type=int, default=2)
    p.add_argument("--out")

    p = add("t23", cmd_t23, "t_{2,3}(N) exactly")
    p.add_argument("--n", type=parse_int, default=None)
    p.add_argument("--scan", type=parse_int, nargs=3, metavar=("LO", "HI", "STEP"))

    add("quarter-cert", cmd_quarter_cert, "check the certificate keeping t_{2,3}(N) below N/4")

    p = add("repair-verify", cmd_repair_verify, "repair ledger for t(N) >= tN on ranges of N")
    p.add_argument("--n-lo", type=parse_int, default=10**11)
    p.add_argument("--n-hi", type=lambda s: None if s.lower() == "inf" else parse_int(s), default=None)
    p.add_argument("--intervals", help="file of 'I <lo> <hi>' lines")
    p.add_argument("--reference", action="store_true", help="verify the default interval cover and tail")
    p.add_argument("--auto", action="store_true", help="bisect failing ranges")
    p.add_argument("--t-rule", default="N/3")
    p.add_argument("--A", type=int, default=REPAIR_A)
    p.add_argument("--K", type=int, default=REPAIR_K)
    p.add_argument("--L", type=to_fraction, default=REPAIR_L)
    p.add_argument("--dump", help="write the ledger of [n-lo, n-hi] as JSON")

    p = add("kb-check", cmd_kb_check, "prefix and block checks of sum 3/n [(n,6)=1] - 1/n")
    p.add_argument("--k-max", type=parse_int, default=6 * 10**4)
    p.add_argument("--rows", action="store_true", help="emit the running sums as rows")

    p = add("constants", cmd_constants, "enclosures of c0, c1', c1'' and c1")
    p.add_argument("--tol", default="1e-8")
    p.add_argument("--which", choices=["c0", "all"], default="all")
    p.add_argument("--no-accelerate", action="store_true")

    p = add("table", cmd_table, "plot data as rows")
    p.add_argument("--kind", choices=["bounds", "greedy", "upper", "tne", "kb", "t23"], required=True)
    p.add_argument("--n-values", nargs="+", required=True)
    return parser


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _payload(outcome: Outcome) -> Dict[str, Any]:
    payload = dict(outcome.data)
    if outcome.rows:
        payload["rows"] = outcome.rows
    return payload


def _csv_rows(outcome: Outcome) -> List[Dict[str, Any]]:
    return outcome.rows or [outcome.data]


def render(outcome: Outcome, fmt: str) -> str:
    if fmt == FORMAT_JSON:
        return json.dumps(_payload(outcome), indent=2, default=str) + "\n"
    if fmt == FORMAT_CSV:
        return rows_to_csv(_csv_rows(outcome))
    text = outcome.text or "\n".join(f"{k}: {v}" for k, v in outcome.data.items())
    return text + "\n"


def run(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    settings.configure_logging(args.log_level)
    print("# egs " + " ".join(shlex.quote(a) for a in argv), file=sys.stderr)
    try:
        outcome = args.handler(args)
    except EGSError as exc:
        logger.error("[CLI] %s: %s", type(exc).__name__, exc)
        if args.format == FORMAT_JSON:
            sys.stdout.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        else:
            print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        logger.error("[CLI] %s", exc)
        if args.format == FORMAT_JSON:
            sys.stdout.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return EXIT_INPUT_ERROR
    text = render(outcome, args.format)
    sys.stdout.write(text)
    if args.output and args.format == FORMAT_JSON:
        save_to_json_file(_payload(outcome), args.output)
    elif args.output and args.format == FORMAT_CSV:
        save_csv_file(_csv_rows(outcome), args.output)
    return outcome.code


if __name__ == "__main__":
    sys.exit(run())
