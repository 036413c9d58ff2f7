import pytest

from src.egs.certify import verify_subfactorization
from src.egs.errors import ChainGapError, DomainError, ResourceLimitError
from src.egs.greedy import (
    ChainMode,
    GreedyConfig,
    GreedyVariant,
    SearchStrategy,
    fast_greedy,
    greedy_count,
    greedy_result,
    greedy_subfactorization,
    hint_chain,
    search_t,
    t1_exhaustive,
)
from src.utils.constants import T_SEQUENCE_PREFIX


def test_nine_three():
    cert = greedy_subfactorization(9, 3)
    assert cert.expand() == [7, 5, 4, 4, 4, 3, 3, 3, 3]
    assert verify_subfactorization(cert).accepted


def test_exact_prefix_of_t():
    for N, expected in enumerate(T_SEQUENCE_PREFIX, start=1):
        t, cert = search_t(N)
        assert t == expected, N
        assert verify_subfactorization(cert).accepted


@pytest.mark.parametrize("N", [50, 500, 3000])
@pytest.mark.parametrize("variant", [GreedyVariant.standard, GreedyVariant.fast])
def test_certificates_always_divide_factorial(N, variant):
    t = N // 3
    result = greedy_result(N, t, GreedyConfig(variant))
    report = verify_subfactorization(result.certificate)
    assert report.count == result.count
    assert report.accepted == (result.count >= N)
    assert not any("deficit" in e for e in report.errors)
    assert report.min_factor >= t


def test_infeasible_t_gives_short_count():
    assert greedy_count(3000, 1500) < 3000


def test_deterministic_output():
    a = fast_greedy(3000, 1000)
    b = fast_greedy(3000, 1000)
    assert a == b


def test_search_strategies_agree_on_validity():
    for strategy in SearchStrategy:
        t, cert = search_t(3000, strategy)
        assert cert.t == t
        assert verify_subfactorization(cert).accepted


def test_t1_ceiling():
    with pytest.raises(ResourceLimitError):
        t1_exhaustive(10**7)


def test_hint_chain_start_and_gaps():
    with pytest.raises(DomainError):
        hint_chain(1000, 2000)
    with pytest.raises(ChainGapError) as info:
        hint_chain(67425, 80000, ChainMode.verify, hints=[(70000, 30000)])
    assert (info.value.lo, info.value.hi) == (67425, 69999)
    with pytest.raises(ChainGapError):
        hint_chain(67425, 80000, ChainMode.verify, hints=[(67425, 20000)])


@pytest.mark.slow
def test_large_split_count():
    result = greedy_result(3 * 10**5, 10**5)
    assert result.count >= 3 * 10**5 + 372
    assert verify_subfactorization(result.certificate).accepted


@pytest.mark.slow
def test_search_reaches_third_at_1e5():
    t, cert = search_t(10**5)
    assert 3 * t >= 10**5
    assert verify_subfactorization(cert).accepted


@pytest.mark.slow
def test_t1_at_1e5():
    assert t1_exhaustive(10**5) == 33572


@pytest.mark.slow
def test_generated_chain_verifies():
    chain = hint_chain(67425, 80000, ChainMode.generate, method="heuristic")
    assert all(3 * t > N for N, t in chain)
    assert hint_chain(67425, 80000, ChainMode.verify, hints=chain) == chain
