import math
from fractions import Fraction

import numpy as np
import pytest

from app.errors import (
    CwgConditionError,
    EmptyPathSpaceError,
    IrreducibilityRequiredError,
    PerronStructureError,
)
from app.services.cwg import (
    Cwg,
    asymptotic_variance,
    build_cwg,
    chain_window,
    growth_constant,
    lift_to_states,
    limit_chain,
    partition_function,
    perron,
    survival_transition_matrix,
    window_distribution,
)
from app.services.garside import compute_garside
from app.services.measures import Valuation
from app.services.mobius import smallest_root_p0
from app.services.presentation import parse_family

PHI = (1 + math.sqrt(5)) / 2

ABSORBING = np.array([
    [1.0, 0.0, 0.0],
    [0.2, 0.5, 0.3],
    [0.1, 0.4, 0.5],
])


def fibonacci(n: int) -> int:
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def test_braid3_states(braid3):
    c = build_cwg(braid3)
    assert len(c) == 9
    assert c.exact
    assert c.to_coordinate_text().splitlines()[0] == "# states 9"


def test_braid3_partition_function(braid3):
    c = build_cwg(braid3)
    assert partition_function(c, 0) == 1
    for k in range(1, 25):
        assert partition_function(c, k) == fibonacci(k + 3) - 1


def test_dual_monoid_partition_function(dual_a3):
    c = build_cwg(dual_a3)
    assert [partition_function(c, k) for k in range(9)] == [2 ** (k + 1) - 1 for k in range(9)]


@pytest.mark.parametrize("fixture", ["braid3", "a2_tilde", "heap3", "dual_a3"])
def test_weighted_partition_function_matches_growth_series(fixture, request, mobius_of):
    g = request.getfixturevalue(fixture)
    omega = Valuation.from_length(g.presentation, Fraction(2, 3))
    c = build_cwg(g, omega)
    series = mobius_of(g).growth_coefficients(omega, 10, cross_check=False)
    assert [partition_function(c, k) for k in range(11)] == series


def test_reducible_monoid_is_refused():
    with pytest.raises(IrreducibilityRequiredError):
        build_cwg(compute_garside(parse_family("heap:a-b")))


def test_braid3_perron(braid3):
    c = build_cwg(braid3)
    pd = perron(c)
    assert pd.lam == pytest.approx(PHI, abs=1e-12)
    assert pd.case == "B"
    assert pd.K == 3
    assert pd.residual_right < 1e-10
    assert pd.residual_left < 1e-10
    assert pd.pi.sum() == pytest.approx(1.0, abs=1e-12)


def test_perron_cases(free2, a2_tilde, dual_a3):
    assert perron(build_cwg(free2)).case == "A"
    assert perron(build_cwg(a2_tilde)).case == "A"
    pd = perron(build_cwg(dual_a3))
    assert pd.case == "B"
    assert pd.K == 2


@pytest.mark.parametrize("fixture", ["braid3", "a2_tilde", "heap3", "dual_a3", "free2"])
def test_perron_root_is_inverse_of_p0(fixture, request, mobius_of):
    g = request.getfixturevalue(fixture)
    p0 = smallest_root_p0(mobius_of(g).mobius_polynomial())
    assert perron(build_cwg(g)).lam == pytest.approx(1 / p0, rel=1e-10)


def test_growth_constant(braid3):
    c = build_cwg(braid3)
    pd = perron(c)
    k = 60
    assert growth_constant(c, pd) * pd.lam**k == pytest.approx(float(partition_function(c, k)), rel=1e-8)
    assert growth_constant(c, pd) == pytest.approx(PHI**3 / math.sqrt(5), rel=1e-9)


def test_nilpotent_matrix_has_no_perron_root():
    c = Cwg(states=(0, 1), entries=((0, 1, 1),), w_minus=(1, 1), w_plus=(1, 1))
    with pytest.raises(PerronStructureError):
        perron(c)


def test_periodic_dominant_component():
    c = Cwg(states=(0, 1), entries=((0, 1, 1), (1, 0, 1)), w_minus=(1, 0), w_plus=(1, 1))
    with pytest.raises(PerronStructureError) as info:
        perron(c)
    assert info.value.details["period"] == 2


def test_two_dominant_components():
    c = Cwg(states=(0, 1), entries=((0, 0, 1), (1, 1, 1)), w_minus=(1, 1), w_plus=(1, 1))
    with pytest.raises(PerronStructureError):
        perron(c)


def test_initial_vector_must_reach_dominant_component():
    c = Cwg(states=(0, 1), entries=((0, 0, 2), (0, 1, 1)), w_minus=(0, 1), w_plus=(1, 1))
    with pytest.raises(CwgConditionError):
        perron(c)


def test_empty_path_space():
    c = Cwg(states=(0, 1), entries=((0, 1, 1),), w_minus=(1, 0), w_plus=(1, 0))
    assert partition_function(c, 3) == 0
    with pytest.raises(EmptyPathSpaceError):
        window_distribution(c, 3, 0)


@pytest.mark.parametrize("fixture", ["free2", "braid3", "a2_tilde"])
def test_limit_chain_is_stochastic_and_stationary(fixture, request):
    g = request.getfixturevalue(fixture)
    c = build_cwg(g)
    lc = limit_chain(perron(c), c)
    P = lc.P.toarray()
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(lc.pi @ P, lc.pi, atol=1e-10)
    assert lc.h.sum() == pytest.approx(1.0, abs=1e-12)
    assert not lc.unreachable


def test_limit_chain_dead_end_states():
    c = Cwg(states=(0, 1), entries=((0, 0, 2), (0, 1, 1)), w_minus=(1, 0), w_plus=(1, 1))
    lc = limit_chain(perron(c), c)
    assert lc.unreachable == frozenset({1})
    assert lc.P.toarray().tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_exact_window_is_a_probability(braid3):
    c = build_cwg(braid3)
    window = window_distribution(c, 6, 2)
    assert sum(window.values()) == 1
    assert all(isinstance(v, Fraction) for v in window.values())
    marginal: dict = {}
    for path, mass in window.items():
        marginal[path[:2]] = marginal.get(path[:2], 0) + mass
    assert marginal == window_distribution(c, 6, 1)


def test_window_bounds(braid3):
    with pytest.raises(ValueError):
        window_distribution(build_cwg(braid3), 3, 3)


def test_free_monoid_window_is_uniform(free2):
    c = build_cwg(free2)
    window = window_distribution(c, 8, 1)
    assert window == {path: Fraction(1, 4) for path in [(0, 0), (0, 1), (1, 0), (1, 1)]}
    limit = chain_window(limit_chain(perron(c), c), 1)
    assert all(limit[path] == pytest.approx(0.25, abs=1e-12) for path in window)


def test_window_converges_to_limit_chain(braid3):
    c = build_cwg(braid3)
    finite = window_distribution(c, 40, 1)
    limit = chain_window(limit_chain(perron(c), c), 1)
    for path in set(finite) | set(limit):
        assert float(finite.get(path, 0)) == pytest.approx(limit.get(path, 0.0), abs=1e-6)


def test_survival_matrix_matches_absorbing_chain_window():
    c = Cwg.from_absorbing_chain(ABSORBING, start=1)
    assert not c.exact
    k = 6
    survival = survival_transition_matrix(ABSORBING, k - 1)
    window = window_distribution(c, k, 1)
    for j in range(2):
        assert window[(0, j)] == pytest.approx(survival[0, j], abs=1e-12)
    assert survival.sum(axis=1) == pytest.approx(np.ones(2), abs=1e-12)


def test_survival_matrix_converges_to_limit_chain():
    c = Cwg.from_absorbing_chain(ABSORBING, start=2)
    lc = limit_chain(perron(c), c)
    assert np.allclose(survival_transition_matrix(ABSORBING, 200), lc.P.toarray(), atol=1e-9)


def test_absorbing_chain_start_is_checked():
    with pytest.raises(ValueError):
        Cwg.from_absorbing_chain(ABSORBING, start=3)


def test_height_lift(braid3):
    c = build_cwg(braid3)
    lifted = lift_to_states(c, braid3, [0.0] + [1.0] * 5)
    assert lifted.sum() == 5
    assert lifted[c.states.index((braid3.delta, 3))] == 1.0
    assert lifted[c.states.index((braid3.delta, 1))] == 0.0


def test_free_monoid_height_is_degenerate(free2):
    c = build_cwg(free2)
    report = asymptotic_variance(c, perron(c), lift_to_states(c, free2, [0.0, 1.0, 1.0]))
    assert report.degenerate
    assert report.sigma2 == 0.0
    assert report.mean == pytest.approx(1.0, abs=1e-12)


def test_free_monoid_letter_count_variance(free2):
    c = build_cwg(free2)
    a = free2.generator_index["a"]
    values = [0.0, 0.0, 0.0]
    values[a] = 1.0
    report = asymptotic_variance(c, perron(c), lift_to_states(c, free2, values))
    assert report.mean == pytest.approx(0.5, abs=1e-12)
    assert report.sigma2 == pytest.approx(0.25, rel=1e-6)
    assert not report.degenerate


def test_braid3_height_variance_methods_agree(braid3):
    c = build_cwg(braid3)
    report = asymptotic_variance(c, perron(c), lift_to_states(c, braid3, [0.0] + [1.0] * 5))
    assert report.sigma2 > 0
    assert report.relative_gap < 1e-5
    assert 1 / 3 < report.mean < 1
