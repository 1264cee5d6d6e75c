import math

import pytest

from app.errors import PresentationSyntaxError, PresentationValueError
from app.services.presentation import (
    braid,
    dihedral,
    dual_a,
    free,
    is_irreducible,
    param_classes,
    parse_family,
    parse_presentation,
)


def test_parse_coxeter_spec(a2_tilde_spec):
    p = parse_presentation(a2_tilde_spec)
    assert p.generators == ("a", "b", "c")
    assert len(p.relations) == 3
    assert (("a", "b", "a"), ("b", "a", "b")) in p.relations
    assert p.coxeter_value("c", "a") == 3


def test_missing_pairs_default_to_infinity():
    p = parse_presentation("generators: a b c\nm: a b = 2\n")
    assert p.coxeter_value("a", "c") == math.inf
    assert set(p.defaulted_pairs) == {frozenset("ac"), frozenset("bc")}
    assert p.relations == ((("a", "b"), ("b", "a")),)


def test_inf_and_comments_are_accepted():
    p = parse_presentation("# free\ngenerators: x y   # two letters\nm: x y = inf\n")
    assert p.relations == ()


def test_syntax_error_carries_line_and_column():
    with pytest.raises(PresentationSyntaxError) as info:
        parse_presentation("generators: a b\nm: a b 3\n")
    assert info.value.line == 2
    assert info.value.exit_code == 2


def test_missing_generators_line():
    with pytest.raises(PresentationSyntaxError):
        parse_presentation("m: a b = 3\n")


def test_bad_value_is_a_syntax_error():
    with pytest.raises(PresentationSyntaxError) as info:
        parse_presentation("generators: a b\nm: a b = three\n")
    assert info.value.line == 2


@pytest.mark.parametrize(
    "text",
    [
        "generators: a b\nm: a b = 3\nm: b a = 4\n",
        "generators: a b\nm: a b = 1\n",
        "generators: a b\nm: a z = 3\n",
    ],
)
def test_invalid_values(text):
    with pytest.raises(PresentationValueError):
        parse_presentation(text)


def test_repeated_consistent_entry_is_fine():
    p = parse_presentation("generators: a b\nm: a b = 3\nm: b a = 3\n")
    assert len(p.relations) == 1


def test_families():
    assert braid(4).generators == ("a", "b", "c")
    assert braid(4).coxeter_value("a", "c") == 2
    assert dihedral(5).relations[0][0] == ("a", "b", "a", "b", "a")
    assert free(3).relations == ()
    assert dual_a(3).generators == ("s12", "s13", "s23")
    assert len(dual_a(3).relations) == 2


def test_parse_family_strings():
    assert parse_family("braid:3").rank == 2
    assert parse_family("dual_a:4").rank == 6
    heap_p = parse_family("heap:a-b,c")
    assert heap_p.generators == ("a", "b", "c")
    assert heap_p.commutes("a", "b")
    product_p = parse_family("free-product:free:1,braid:3")
    assert product_p.generators == ("a", "b", "c")
    assert product_p.coxeter_value("b", "c") == 3
    assert product_p.coxeter_value("a", "b") == math.inf


@pytest.mark.parametrize("text", ["cube:3", "braid:x", "braid:1", "heap:a-b-c", "free-product:free:1"])
def test_bad_family_strings(text):
    with pytest.raises(PresentationValueError):
        parse_family(text)


def test_irreducibility():
    assert is_irreducible(braid(4)).irreducible
    assert is_irreducible(free(2)).irreducible
    assert is_irreducible(dual_a(3)).irreducible
    report = is_irreducible(parse_family("heap:a-b"))
    assert not report.irreducible
    assert report.components == (("a",), ("b",))


def test_word_syntax():
    p = dual_a(3)
    assert p.parse_word("s12.s23") == ("s12", "s23")
    assert p.format_word(("s12", "s23")) == "s12.s23"
    assert braid(3).parse_word("aba") == ("a", "b", "a")
    assert braid(3).parse_word("e") == ()
    assert braid(3).parse_word("ε") == ()
    assert braid(3).format_word(()) == "e"
    with pytest.raises(PresentationValueError):
        braid(3).parse_word("abz")


def test_parameter_classes():
    assert param_classes(braid(3)).K == 1
    assert param_classes(dihedral(4)).K == 2
    assert param_classes(free(2)).K == 2
    assert param_classes(parse_presentation("generators: a b c\nm: a b = 3\nm: b c = 3\nm: a c = 3\n")).K == 1
    assert param_classes(dual_a(3)).K == 1
