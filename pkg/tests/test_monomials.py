import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swapnpa.monomials import (
    ALICE,
    CHARLIE,
    Monomial,
    MonomialSet,
    SideMismatch,
    adjoint,
    build_alice_set,
    build_charlie_set_extended,
    canonicalize,
    identity,
    multiply,
    parse,
    render,
)


def A(*w):
    return canonicalize(ALICE, w)


def C(*w, s=()):
    return canonicalize(CHARLIE, w, s)


def test_canonicalize_examples():
    assert A(1, 1).word == (1,)
    assert C(0, 2, 0).word == (2,)
    m = C(s=(3, 1))
    assert m.word == () and m.scalars == (1, 3)
    # only adjacent duplicates collapse
    assert A(1, 2, 1).word == (1, 2, 1)


def test_adjoint_examples():
    assert adjoint(A(1, 2)) == A(2, 1)
    assert adjoint(A(3)) == A(3)
    assert adjoint(identity(ALICE)) == identity(ALICE)
    assert adjoint(C(1, 2, s=(2,))) == C(2, 1, s=(2,))


def test_multiply_examples():
    assert multiply(C(2), C(3)) == C(2, 3)
    assert multiply(C(s=(1,)), C(2)) == C(2, s=(1,))
    assert multiply(C(s=(1,)), C(s=(2,))) == C(s=(1, 2))
    assert multiply(C(s=(2,)), C(s=(2,))).scalars == (2, 2)
    with pytest.raises(SideMismatch):
        multiply(A(1), C(1))


def test_scalars_only_on_charlie_side():
    with pytest.raises(ValueError):
        Monomial(ALICE, (), (1,))


@pytest.mark.parametrize("text", ["A1A2", "c1*C2C3", "c1*c2", "C3", "c2*c2"])
def test_render_parse_round_trip(text):
    assert render(parse(text)) == text


def test_render_identity():
    assert render(identity(CHARLIE)) == "I"


@pytest.mark.parametrize("m,degree,size", [(3, 1, 4), (3, 2, 10), (2, 2, 5)])
def test_alice_set_sizes(m, degree, size):
    s = build_alice_set(m, degree)
    assert len(s) == size
    assert s[0].is_identity


def test_alice_set_degree_two_elements():
    s = build_alice_set(2, 2)
    assert [render(x) for x in s] == ["I", "A1", "A2", "A1A2", "A2A1"]


@pytest.mark.parametrize("m", [1, 2, 3, 4, 5])
def test_alice_degree_two_count_formula(m):
    assert len(build_alice_set(m, 2)) == 1 + m + m * (m - 1)


@pytest.mark.parametrize("n,ext,size", [(3, True, 13), (4, True, 21), (3, False, 10)])
def test_charlie_set_sizes(n, ext, size):
    assert len(build_charlie_set_extended(n, 2, ext)) == size


def test_charlie_set_contains_scalars():
    s = build_charlie_set_extended(3, 2, True)
    names = [render(x) for x in s]
    assert names[0] == "I"
    for i in (1, 2, 3):
        assert f"c{i}" in names
    assert "C1C2" in names and "C3C2" in names


def test_charlie_products_scalar_degrees():
    s = build_charlie_set_extended(3, 2, True)
    for p in s.products():
        if p.scalars:
            assert len(p.word) <= 2 and len(p.scalars) <= 2


def test_monomial_set_invariants():
    with pytest.raises(ValueError):
        MonomialSet(ALICE, (A(1), identity(ALICE)))
    with pytest.raises(ValueError):
        MonomialSet(ALICE, (identity(ALICE), A(1), A(1)))


words = st.lists(st.integers(0, 3), max_size=6)
scalars = st.lists(st.integers(1, 3), max_size=3)


@settings(max_examples=100, deadline=None)
@given(words, scalars)
def test_canonicalize_idempotent(w, s):
    m = C(*w, s=s)
    assert canonicalize(CHARLIE, m.word, m.scalars) == m


@settings(max_examples=100, deadline=None)
@given(words, scalars)
def test_adjoint_involution(w, s):
    m = C(*w, s=s)
    assert adjoint(adjoint(m)) == m


@settings(max_examples=100, deadline=None)
@given(words, words, words)
def test_multiply_associative(w1, w2, w3):
    a, b, c = A(*w1), A(*w2), A(*w3)
    assert multiply(multiply(a, b), c) == multiply(a, multiply(b, c))
