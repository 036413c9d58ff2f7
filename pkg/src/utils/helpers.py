"""
Helper functions for the application.
"""
import concurrent.futures
import csv
import io
import json
import math
import re
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

from src.egs.errors import DomainError
from src.services.settings import get_settings


def save_to_json_file(data: Any, file_path: str) -> None:
    """
    Save data to a JSON file.

    Args:
        data: Data to save
        file_path: Path to save the file
    """
    with open(file_path, 'w') as json_file:
        json.dump(data, json_file, indent=2, default=str)


def rows_to_csv(rows: Sequence[Dict[str, Any]], columns: Optional[List[str]] = None) -> str:
    """
    Render dict rows as CSV text with a stable column order.

    Args:
        rows: Rows to render
        columns: Column order; defaults to the keys of the first row

    Returns:
        str: CSV text with a trailing newline
    """
    if not rows:
        return ""
    columns = columns or list(rows[0].keys())
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def save_csv_file(rows: Sequence[Dict[str, Any]], file_path: str, columns: Optional[List[str]] = None) -> None:
    with open(file_path, 'w') as handle:
        handle.write(rows_to_csv(rows, columns))


_EXPR = re.compile(r"^\s*(\d*)\s*N\s*/\s*(\d+)\s*$")


def parse_threshold(expr: str, N: int, rounding: str = "floor") -> int:
    """
    Resolve a threshold such as "N/3", "2N/7" or a plain integer.

    Args:
        expr: The expression text
        N: Value substituted for N
        rounding: "floor" or "ceil" for fractional results

    Returns:
        int: The resolved threshold
    """
    expr = str(expr).strip()
    if re.fullmatch(r"\d+", expr):
        return int(expr)
    match = _EXPR.match(expr)
    if not match:
        raise DomainError(f"cannot parse threshold {expr!r}; use an integer or aN/b")
    numerator = int(match.group(1) or 1)
    value = Fraction(numerator * N, int(match.group(2)))
    if rounding == "ceil":
        return math.ceil(value)
    return math.floor(value)


def parse_int(text: str) -> int:
    """Parse integers written as 100000, 1e5 or 3*10^5."""
    text = str(text).strip().replace("_", "")
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    match = re.fullmatch(r"(\d+)[eE](\d+)", text)
    if match:
        return int(match.group(1)) * 10 ** int(match.group(2))
    match = re.fullmatch(r"(\d+)\s*\*\s*10\^(\d+)", text)
    if match:
        return int(match.group(1)) * 10 ** int(match.group(2))
    raise DomainError(f"cannot parse integer {text!r}")


def worker_pool(threads: Optional[int] = None, executor: Optional[str] = None):
    """
    Create a process or thread pool sized from the configured thread budget.

    Args:
        threads: Worker count
        executor: "process" or "thread"

    Returns:
        A concurrent.futures executor usable as a context manager
    """
    config = get_settings()
    threads = threads or config["threads"]
    executor = executor or config["executor"]
    if executor == "process":
        return concurrent.futures.ProcessPoolExecutor(max_workers=threads)
    return concurrent.futures.ThreadPoolExecutor(max_workers=threads)


def parallel_map(fn: Callable, items: Iterable, threads: Optional[int] = None,
                 executor: Optional[str] = None, pool=None) -> List[Any]:
    """
    Map fn over items with a process or thread pool, preserving input order.

    Args:
        fn: A picklable top-level function when using processes
        items: Arguments, one per call
        threads: Worker count (defaults to the configured thread budget)
        executor: "process" or "thread"
        pool: An already running executor to reuse

    Returns:
        List of results in input order
    """
    items = list(items)
    if pool is not None:
        return list(pool.map(fn, items))
    threads = threads or get_settings()["threads"]
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with worker_pool(threads, executor) as own_pool:
        return list(own_pool.map(fn, items))


def chunked(values: Sequence, size: int) -> List[Sequence]:
    return [values[i:i + size] for i in range(0, len(values), size)]
