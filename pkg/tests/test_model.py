import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapsearch.model import (
    BayesianNetwork,
    DomainError,
    InvalidEvidenceError,
    ModelError,
    ParseError,
    Potential,
    Scaled,
    Variable,
    default_name,
    emit_evidence,
    emit_network,
    emit_var_set,
    joint_probability,
    le_rel,
    max_out,
    multiply,
    multiply_all,
    parse_evidence,
    parse_network,
    parse_var_set,
    rel_close,
    restrict,
    sum_out,
)
from oracles import brute_potential_sum, random_network

XY = Potential((0, 1), np.array([[0.06, 0.14], [0.24, 0.56]]))


def assert_pot(p, scope, flat, tol=1e-12):
    assert p.scope == tuple(scope)
    got = p.table * 2.0 ** p.scale_exp
    np.testing.assert_allclose(got, flat, rtol=tol, atol=0)


# --- restrict / multiply / sum_out / max_out examples ------------------------

def test_restrict_slice():
    assert_pot(restrict(XY, {1: 1}), [0], [0.14, 0.56])


def test_restrict_empty_evidence_is_identity():
    p = Potential((0,), [0.2, 0.8])
    assert_pot(restrict(p, {}), [0], [0.2, 0.8])


def test_restrict_full_instantiation_is_trivial():
    p = restrict(XY, {0: 1, 1: 0})
    assert p.scope == ()
    assert float(p.scalar()) == pytest.approx(0.24, rel=1e-15)


def test_restrict_preserves_scale_exp():
    p = Potential((0, 1), XY.values, scale_exp=-40)
    assert restrict(p, {0: 0}).scale_exp == -40


def test_restrict_out_of_range():
    with pytest.raises(InvalidEvidenceError):
        restrict(XY, {1: 2})


def test_multiply_elementwise():
    assert_pot(multiply(Potential((0,), [0.2, 0.8]), Potential((0,), [0.5, 0.5])), [0], [0.1, 0.4])


def test_multiply_outer():
    out = multiply(Potential((0,), [0.2, 0.8]), Potential((1,), [0.3, 0.7]))
    assert_pot(out, [0, 1], [0.06, 0.14, 0.24, 0.56])


def test_multiply_scalar():
    assert_pot(multiply(Potential.trivial(2.0), Potential((1,), [0.3, 0.7])), [1], [0.6, 1.4])


def test_sum_out_examples():
    assert_pot(sum_out(XY, 1), [0], [0.2, 0.8])
    assert float(sum_out(Potential((0,), [0.3, 0.7]), 0).scalar()) == pytest.approx(1.0)
    t = Potential((0, 1), np.array([[0.4, 0.1], [0.2, 0.3]]))
    assert_pot(sum_out(t, 0), [1], [0.6, 0.4])


def test_max_out_examples():
    p, arg = max_out(XY, 1)
    assert_pot(p, [0], [0.14, 0.56])
    assert list(arg) == [1, 1]
    p, arg = max_out(Potential((0,), [0.3, 0.7]), 0)
    assert float(p.scalar()) == 0.7 and int(arg) == 1
    t = Potential((0, 1), np.array([[0.4, 0.1], [0.2, 0.3]]))
    p, arg = max_out(t, 1)
    assert_pot(p, [0], [0.4, 0.3])
    assert list(arg) == [0, 1]


def test_max_out_ties_pick_smallest_state():
    _, arg = max_out(Potential((0, 1), np.array([[0.5, 0.5], [0.1, 0.1]])), 1)
    assert list(arg) == [0, 0]


def test_eliminating_absent_variable():
    with pytest.raises(DomainError):
        sum_out(XY, 5)
    with pytest.raises(DomainError):
        max_out(XY, 5)


def test_potential_validation():
    with pytest.raises(ModelError):
        Potential((0,), [0.2, -0.1])
    with pytest.raises(ModelError):
        Potential((0,), [0.2, math.inf])
    with pytest.raises(ModelError):
        Potential((1, 0), np.ones((2, 2)))
    assert Potential.trivial().size == 1


def test_renormalization_keeps_value():
    tiny = Potential((0,), [1e-200, 2e-200])
    prod = multiply_all([tiny, tiny, tiny, tiny])
    assert prod.table.max() >= 2.0 ** -512
    assert prod.scale_exp < 0
    expected = Scaled(1e-200) * Scaled(1e-200) * Scaled(1e-200) * Scaled(1e-200)
    assert rel_close(prod.scaled_entry((0,)), expected, 1e-12)
    assert rel_close(sum_out(prod, 0).scalar(), expected * 17.0, 1e-12)


def test_zero_potential_is_legal():
    z = multiply(Potential((0,), [0.0, 0.0]), Potential((0,), [0.5, 0.5]))
    assert z.table.max() == 0.0
    assert sum_out(z, 0).scalar().is_zero()


# --- Scaled -----------------------------------------------------------------

def test_scaled_orders_beyond_double_range():
    a = Scaled.from_log10(-400)
    b = Scaled.from_log10(-399)
    assert a < b and float(a) == 0.0 and not a.is_zero()
    assert a.log10() == pytest.approx(-400)
    assert rel_close(a * Scaled.from_log10(400), 1.0, 1e-12)
    assert b.ratio(a) == pytest.approx(10.0)
    assert le_rel(a, b) and not le_rel(b, a)
    assert Scaled(0.0) < a and Scaled(0.0) == 0.0


# --- joint probability -------------------------------------------------------

def test_joint_probability_n1(n1):
    assert float(joint_probability(n1, {0: 0, 1: 0})) == pytest.approx(0.49, rel=1e-15)
    assert float(joint_probability(n1, {0: 1, 1: 1})) == pytest.approx(0.24, rel=1e-15)
    with pytest.raises(ModelError):
        joint_probability(n1, {0: 0})


def test_joint_probability_deterministic_network():
    text = "BAYES\n2\n2 2\n2\n1 0\n2 0 1\n2 1 0\n4 0 1 1 0\n"
    net = parse_network(text)
    for a in range(2):
        for b in range(2):
            assert float(joint_probability(net, {0: a, 1: b})) in (0.0, 1.0)


# --- parsing -----------------------------------------------------------------

def test_parse_n1(n1):
    assert n1.n == 2 and n1.cards == (2, 2) and len(n1.cpts) == 2
    assert n1.parents == ((), (0,))
    assert [v.name for v in n1.variables] == ["A", "B"]
    np.testing.assert_allclose(n1.cpts[1].values, [[0.7, 0.3], [0.2, 0.8]])


def test_parse_evidence_and_var_set(n1):
    assert parse_evidence("1 1 1", n1) == {1: 1}
    assert parse_var_set("2 1 0", n1) == [0, 1]
    with pytest.raises(ModelError):
        parse_evidence("1 1 2", n1)
    with pytest.raises(ModelError):
        parse_var_set("1 7", n1)


def test_parse_child_last_reorders_table():
    # scope line lists parent 1 then child 0: table is (parent, child) child fastest
    text = "BAYES\n2\n2 2\n2\n2 1 0\n1 1\n4 0.9 0.1 0.4 0.6\n2 0.5 0.5\n"
    net = parse_network(text)
    assert net.parents[0] == (1,)
    assert net.cpts[0].scope == (0, 1)
    np.testing.assert_allclose(net.cpts[0].values, [[0.9, 0.4], [0.1, 0.6]])


@pytest.mark.parametrize("text, line", [
    ("BAYES\n1\n0\n1\n1 0\n0\n", 3),
    ("MARKOV\n1\n2\n1\n1 0\n2 0.5 0.5\n", 1),
    ("BAYES\n1\n2\n1\n1 0\n2 0.5 0.6\n", None),
    ("BAYES\n2\n2 2\n2\n2 1 0\n2 0 1\n4 .5 .5 .5 .5\n4 .5 .5 .5 .5\n", None),
    ("BAYES\n1\n2\n1\n1 3\n2 0.5 0.5\n", None),
    ("BAYES\n1\n2\n1\n1 0\n2 0.5 abc\n", 6),
    ("BAYES\n1\n2\n1\n1 0\n3 0.5 0.5\n", None),
])
def test_parse_errors(text, line):
    with pytest.raises(ModelError) as info:
        parse_network(text)
    if line is not None:
        assert isinstance(info.value, ParseError)
        assert info.value.line == line


def test_cycle_rejected():
    a = Potential((0, 1), np.full((2, 2), 0.5))
    with pytest.raises(ModelError, match="cycl"):
        BayesianNetwork((Variable(0, "A", 2), Variable(1, "B", 2)), ((1,), (0,)), (a, a))


def test_default_names():
    assert [default_name(i) for i in (0, 1, 25, 26, 27)] == ["A", "B", "Z", "AA", "AB"]


def test_emit_evidence_round_trip(n1):
    assert parse_evidence(emit_evidence({1: 1, 0: 0}), n1) == {0: 0, 1: 1}
    assert parse_var_set(emit_var_set([1, 0]), n1) == [0, 1]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 7))
def test_network_round_trip(seed, n):
    net = random_network(np.random.default_rng(seed), n, max_parents=3, cards=(2, 3, 4))
    back = parse_network(emit_network(net))
    assert back.parents == net.parents
    assert back.cards == net.cards
    for a, b in zip(back.cpts, net.cpts):
        assert a.scope == b.scope
        assert np.array_equal(a.values, b.values)
    assert emit_network(back) == emit_network(net)


# --- algebraic properties ----------------------------------------------------

def random_potential(rng, scope, cards, zero=False):
    shape = tuple(cards[v] for v in scope)
    vals = rng.random(shape)
    if zero:
        vals[rng.random(shape) < 0.3] = 0.0
    return Potential(scope, vals, scale_exp=int(rng.integers(-5, 6)))


def values(p):
    return p.values * 2.0 ** p.scale_exp


@st.composite
def potential_case(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    k = draw(st.integers(2, 4))
    cards = [int(c) for c in rng.integers(1, 4, size=k)]
    return rng, tuple(range(k)), cards


@settings(max_examples=150, deadline=None)
@given(potential_case())
def test_sum_out_matches_loop(case):
    rng, scope, cards = case
    p = random_potential(rng, scope, cards)
    for axis, v in enumerate(scope):
        np.testing.assert_allclose(values(sum_out(p, v)), brute_potential_sum(values(p), axis),
                                   rtol=1e-12, atol=0)


@settings(max_examples=150, deadline=None)
@given(potential_case())
def test_elimination_commutation(case):
    rng, scope, cards = case
    p = random_potential(rng, scope, cards, zero=bool(rng.integers(2)))
    x, y = scope[0], scope[-1]
    a = values(sum_out(sum_out(p, x), y))
    b = values(sum_out(sum_out(p, y), x))
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)
    a = values(max_out(max_out(p, x)[0], y)[0])
    b = values(max_out(max_out(p, y)[0], x)[0])
    assert np.array_equal(a, b)
    sum_max = values(sum_out(max_out(p, y)[0], x))
    max_sum = values(max_out(sum_out(p, x), y)[0])
    assert np.all(sum_max >= max_sum * (1 - 1e-12))


@settings(max_examples=150, deadline=None)
@given(potential_case())
def test_multiply_associative_commutative(case):
    rng, scope, cards = case
    picks = [tuple(sorted(int(v) for v in rng.choice(scope, size=rng.integers(0, len(scope) + 1),
                                                      replace=False))) for _ in range(3)]
    a, b, c = (random_potential(rng, s, cards) for s in picks)
    ab_c = multiply(multiply(a, b), c)
    a_bc = multiply(a, multiply(b, c))
    ba = multiply(b, a)
    assert ab_c.scope == a_bc.scope
    np.testing.assert_allclose(values(ab_c), values(a_bc), rtol=1e-12, atol=0)
    np.testing.assert_allclose(values(multiply(a, b)), values(ba), rtol=1e-12, atol=0)


@settings(max_examples=150, deadline=None)
@given(potential_case())
def test_restrict_distributes_over_multiply(case):
    rng, scope, cards = case
    a = random_potential(rng, scope[:-1], cards)
    b = random_potential(rng, scope[1:], cards)
    ev = {v: int(rng.integers(cards[v])) for v in scope if rng.random() < 0.5}
    left = restrict(multiply(a, b), ev)
    right = multiply(restrict(a, ev), restrict(b, ev))
    assert left.scope == right.scope
    np.testing.assert_allclose(values(left), values(right), rtol=1e-12, atol=0)
