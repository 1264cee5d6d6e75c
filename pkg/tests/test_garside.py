import numpy as np
import pytest
from hypothesis import given, settings as hsettings
from hypothesis import strategies as st

from app.errors import GarsideSetTooLargeError, IrreducibilityRequiredError
from app.services.garside import (
    UNIT,
    arrow,
    charney_graph,
    check_axioms,
    compute_garside,
    is_type_fc,
    lr_sets,
    multiply,
    normal_form,
    normality_criterion,
)
from app.services.presentation import MonoidPresentation, braid, dihedral, free, free_product, parse_family
from tests.oracles import brute_arrow, elements_up_to, enumerate_classes

A2_TILDE_SIMPLES = [
    "", "a", "b", "c", "ab", "ac", "ba", "bc", "ca", "cb",
    "aba", "bcb", "cac", "abcb", "bcac", "caba",
]


def blocks(g, word: str) -> list[str]:
    return [g.format(i) for i in normal_form(g, tuple(word)).normal]


def test_braid3_simples(braid3):
    assert len(braid3) == 6
    assert braid3.is_spherical
    assert braid3.format(braid3.delta) == "aba"
    assert is_type_fc(braid3)
    assert list(braid3.lengths) == [0, 1, 1, 2, 2, 3]


def test_a2_tilde_simples(a2_tilde):
    g = a2_tilde
    assert len(g) == 16
    assert {g.index[tuple(w)] for w in A2_TILDE_SIMPLES} == set(range(16))
    assert tuple("caba") in g.index
    assert tuple("cab") not in g.index
    assert not g.is_spherical
    assert not is_type_fc(g)


def test_a2_tilde_normal_forms(a2_tilde):
    assert blocks(a2_tilde, "abc") == ["ab", "c"]
    assert blocks(a2_tilde, "abcb") == ["abcb"]
    assert normal_form(a2_tilde, ()).is_unit
    assert normal_form(a2_tilde, tuple("abc")).height == 2


def test_braid3_delta_squared(braid3):
    x = normal_form(braid3, tuple("abaaba"))
    assert x.normal == (braid3.delta, braid3.delta)
    assert blocks(braid3, "bab") == ["aba"]


def test_free_monoid_blocks_are_letters(free2):
    assert len(free2) == 3
    assert free2.delta is None
    assert blocks(free2, "abba") == ["a", "b", "b", "a"]


@pytest.mark.parametrize("fixture", ["braid3", "a2_tilde", "dual_a3"])
def test_arrow_matches_brute_force(fixture, request):
    g = request.getfixturevalue(fixture)
    for x in range(len(g)):
        for y in range(len(g)):
            assert arrow(g, x, y) == brute_arrow(g, x, y), (g.format(x), g.format(y))


def test_arrow_with_unit(a2_tilde):
    g = a2_tilde
    for x in range(1, len(g)):
        assert arrow(g, x, UNIT)
        assert not arrow(g, UNIT, x)


@pytest.mark.parametrize("fixture", ["braid3", "a2_tilde", "heap3"])
def test_normality_criterion_is_sufficient(fixture, request):
    g = request.getfixturevalue(fixture)
    for x in range(1, len(g)):
        for y in range(1, len(g)):
            if normality_criterion(g, x, y):
                assert g.arrow[x, y]


def test_letter_sets(braid3):
    ab = braid3.index[("a", "b")]
    sets = lr_sets(braid3, ab)
    assert sets.left == {"a"}
    assert sets.right == {"b"}
    assert sets.letters == {"a", "b"}


@pytest.mark.parametrize("fixture", ["braid3", "a2_tilde", "dual_a3", "heap3"])
def test_normal_forms_count_classes(fixture, request):
    g = request.getfixturevalue(fixture)
    limit = 5
    elements = elements_up_to(g, limit)
    classes = enumerate_classes(g.presentation, limit)
    for k in range(limit + 1):
        assert sum(1 for x in elements if x.length == k) == len(classes[k])
    for x in elements:
        assert normal_form(g, g.word_of(x)) == x
        assert all(g.arrow[a, b] for a, b in zip(x.normal, x.normal[1:]))


def test_delta_divisors_coincide(braid4):
    g = braid4
    assert len(g) == 24
    assert g.leq_left[:, g.delta].all()
    assert g.leq_right[:, g.delta].all()


def test_element_divisibility(braid3):
    g = braid3
    x = normal_form(g, tuple("ab"))
    y = normal_form(g, tuple("abba"))
    assert g.left_divides(x, y)
    assert g.left_quotient(x, y) == normal_form(g, tuple("ba"))
    assert not g.left_divides(normal_form(g, ("b",)), y)


def test_size_cap():
    with pytest.raises(GarsideSetTooLargeError):
        compute_garside(braid(3), size_cap=3)


def test_charney_graph(braid3):
    charney = charney_graph(braid3)
    assert braid3.delta not in charney.vertices
    assert len(charney.vertices) == 4
    assert charney.strongly_connected


@pytest.mark.parametrize("family", ["braid:4", "dihedral:4", "dihedral:5", "dihedral:6", "dual-a:3", "dual-a:4"])
def test_charney_graph_strongly_connected(family):
    assert charney_graph(compute_garside(parse_family(family))).strongly_connected


def test_charney_graph_a2_tilde_and_heap(a2_tilde, heap3):
    assert charney_graph(a2_tilde).strongly_connected
    assert charney_graph(heap3).strongly_connected


@pytest.mark.slow
def test_charney_graph_braid5():
    assert charney_graph(compute_garside(braid(5))).strongly_connected


def test_charney_graph_refuses_reducible():
    with pytest.raises(IrreducibilityRequiredError):
        charney_graph(compute_garside(parse_family("heap:a-b")))


def test_axioms_dual_monoid(dual_a3):
    report = check_axioms(dual_a3)
    assert report.passed, report.checks


def test_axioms_free_product():
    g = compute_garside(free_product(free(1), braid(3)))
    report = check_axioms(g)
    assert report.passed, report.checks


def test_axioms_two_generator_caveat(dihedral4):
    report = check_axioms(dihedral4)
    assert any("two generators" in note for note in report.notes)


def test_axioms_reducible_fails_connectivity():
    report = check_axioms(compute_garside(parse_family("heap:a-b")))
    assert not report["P5"].passed


def test_cycle_gcd_ranges_over_all_simples():
    # no Charney graph here, yet a → a already closes a walk of length 1
    report = check_axioms(compute_garside(parse_family("heap:a-b")))
    assert report["P6"].passed
    assert report["P6"].detail.endswith("= 1")


@pytest.mark.parametrize("family", ["braid:3", "braid:4", "dual-a:3"])
def test_cycle_gcd_includes_delta(family):
    g = compute_garside(parse_family(family))
    assert g.arrow[g.delta, g.delta]
    assert check_axioms(g)["P6"].passed


def test_dual_monoid_structure(dual_a3):
    g = dual_a3
    assert len(g) == 5
    assert g.format(g.delta) == "s12.s23"
    assert int(g.lengths[g.delta]) == 2


def test_dihedral_simples():
    g = compute_garside(dihedral(5))
    assert len(g) == 10
    assert int(g.lengths[g.delta]) == 5


_A2_TILDE = compute_garside(
    MonoidPresentation.from_coxeter(
        ["a", "b", "c"],
        {frozenset("ab"): 3, frozenset("bc"): 3, frozenset("ac"): 3},
        name="A~2",
    )
)

letters = st.lists(st.sampled_from(["a", "b", "c"]), max_size=4).map(tuple)


@hsettings(max_examples=40, deadline=None)
@given(letters, letters, letters)
def test_multiplication_is_associative(u, v, w):
    g = _A2_TILDE
    x, y, z = (normal_form(g, s) for s in (u, v, w))
    assert multiply(g, multiply(g, x, y), z) == multiply(g, x, multiply(g, y, z))
    assert multiply(g, multiply(g, x, y), z) == normal_form(g, u + v + w)


def test_unit_normal_form(braid3):
    assert normal_form(braid3, ()).normal == (UNIT,)
    assert braid3.format_element(normal_form(braid3, ())) == "e"
    assert np.all(braid3.arrow[:, UNIT])
