"""
Exception hierarchy shared by the computational modules, the CLI and the API.
"""
from typing import Optional

# Exit codes used by main/main.py
EXIT_VERIFIED = 0
EXIT_NOT_PROVEN = 1
EXIT_INPUT_ERROR = 2
EXIT_RESOURCE_LIMIT = 3


class EGSError(Exception):
    """Base class for every error raised by the egs package."""

    exit_code = EXIT_INPUT_ERROR


class DomainError(EGSError, ValueError):
    """An argument lies outside the domain of the requested operation."""


class ResourceLimitError(EGSError):
    """A configured ceiling (sieve size, column count, node budget) was exceeded."""

    exit_code = EXIT_RESOURCE_LIMIT


class CertificateFormatError(EGSError):
    """A certificate or data file could not be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class GreedyResidualError(EGSError):
    """The large-prime phase drove a small-prime valuation negative."""

    exit_code = EXIT_RESOURCE_LIMIT

    def __init__(self, prime: int, split_point: int):
        self.prime = prime
        self.split_point = split_point
        super().__init__(
            f"residual valuation of {prime} went negative with M={split_point}; "
            f"rerun with a larger split point M"
        )


class ChainGapError(EGSError):
    """A hint chain leaves part of the target range uncovered."""

    exit_code = EXIT_NOT_PROVEN

    def __init__(self, lo: int, hi: int):
        self.lo = lo
        self.hi = hi
        super().__init__(f"hint chain does not cover N in [{lo}, {hi}]")


class AxiomError(EGSError):
    """A candidate downset violates one of the downset axioms."""

    def __init__(self, element: int, reason: str):
        self.element = element
        super().__init__(f"element {element}: {reason}")


class VerificationError(EGSError):
    """An internal consistency check failed."""

    exit_code = EXIT_NOT_PROVEN
