import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapsearch.elimination import min_fill_order, network_graph, relaxed_map_bound
from mapsearch.jointree import Jointree, build_jointree, choose_root, promote
from mapsearch.model import ModelError, le_rel, rel_close
from mapsearch.propagation import AssertionConflict, PropagationState
from oracles import joint_map, random_network, random_query

A, B = 0, 1


def n1_two_clusters(n1):
    # {A} holds P(A), {A,B} holds P(B|A)
    return Jointree([{A}, {A, B}], [{1}, {0}], [0, 1], list(n1.cpts), n1.cards, 4)


def flat(p):
    return p.table * 2.0 ** p.scale_exp


def test_leaf_message_passes_prior(n1):
    st_ = PropagationState(n1_two_clusters(n1), {B}, root=1)
    np.testing.assert_allclose(flat(st_.message(0, 1)), [0.7, 0.3], rtol=1e-15)


def test_sum_message_of_cpt_is_one(n1):
    st_ = PropagationState(n1_two_clusters(n1), set(), root=0)
    np.testing.assert_allclose(flat(st_.message(1, 0)), [1.0, 1.0], rtol=1e-15)


def test_max_message_takes_row_max(n1):
    st_ = PropagationState(n1_two_clusters(n1), {B}, root=0)
    np.testing.assert_allclose(flat(st_.message(1, 0)), [0.7, 0.8], rtol=1e-15)
    # rooted away from B, the bound is the relaxed 0.73 rather than the exact 0.55
    assert float(st_.bound()) == pytest.approx(0.73, rel=1e-12)


def single_cluster(n1, evidence=None):
    return build_jointree(n1, evidence or {}, [A, B] if not evidence else [A])


def test_single_cluster_bound_is_exact(n1):
    assert float(PropagationState(single_cluster(n1), {B}).bound()) == pytest.approx(0.55)
    assert float(PropagationState(single_cluster(n1), set()).bound()) == pytest.approx(1.0)


def test_all_max_variables_fixed_gives_joint(n1):
    state = PropagationState(single_cluster(n1), {A, B})
    for a in range(2):
        for b in range(2):
            ta = state.assert_equal(A, a)
            tb = state.assert_equal(B, b)
            expected = n1.cpts[0].values[a] * n1.cpts[1].values[a, b]
            assert float(state.bound()) == pytest.approx(expected, rel=1e-12)
            state.retract(tb)
            state.retract(ta)


def test_value_bounds_n1(n1):
    state = PropagationState(single_cluster(n1, {B: 1}), {A})
    vb = state.value_bounds(A)
    assert float(vb.bound(0)) == pytest.approx(0.21, rel=1e-12)
    assert float(vb.bound(1)) == pytest.approx(0.24, rel=1e-12)
    assert vb.best_state() == 1
    before = state.bound()
    assert all(le_rel(b, before, 1e-9) for b in vb.bounds())
    t = state.assert_equal(A, 1)
    assert float(state.bound()) == pytest.approx(0.24, rel=1e-12)
    state.retract(t)
    t = state.assert_not_equal(A, 0)
    assert rel_close(state.bound(), vb.bound(1), 1e-12)
    state.retract(t)
    assert state.bound() == before


def test_retained_is_strict(n1):
    state = PropagationState(single_cluster(n1, {B: 1}), {A})
    vb = state.value_bounds(A)
    assert vb.retained(vb.bound(0)) == [1]
    assert vb.retained(vb.bound(1)) == []


def test_assertion_errors(n1):
    state = PropagationState(single_cluster(n1), {A, B})
    t1 = state.assert_equal(A, 0)
    with pytest.raises(AssertionConflict):
        state.assert_not_equal(A, 0)
    with pytest.raises(AssertionConflict):
        state.assert_equal(A, 1)
    t2 = state.assert_not_equal(B, 0)
    with pytest.raises(AssertionConflict):
        state.assert_not_equal(B, 1)
    with pytest.raises(ModelError):
        state.retract(t1)
    state.retract(t2)
    state.retract(t1)
    with pytest.raises(ModelError):
        state.value_bounds(7)


# --- randomized properties ----------------------------------------------------

def random_state(seed, do_promote=True, cards=(2, 2, 3)):
    rng = np.random.default_rng(seed)
    net = random_network(rng, int(rng.integers(3, 11)), max_parents=3, cards=cards,
                         zero_prob=0.1 if rng.random() < 0.3 else 0.0)
    ev, mv = random_query(rng, net)
    jt = build_jointree(net, ev, min_fill_order(network_graph(net, ev)))
    root = choose_root(jt, mv)
    if do_promote:
        promote(jt, root, mv, jt.size_budget)
    return rng, net, ev, mv, PropagationState(jt, mv, root)


def random_assertions(rng, state, mv, count):
    tokens = []
    for _ in range(count):
        v = int(rng.choice(mv))
        allowed = np.flatnonzero(state.allowed(v))
        s = int(rng.choice(allowed))
        if rng.random() < 0.5:
            tokens.append(state.assert_equal(v, s))
        elif len(allowed) > 1:
            tokens.append(state.assert_not_equal(v, s))
    return tokens


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), do_promote=st.booleans())
def test_root_bound_equals_induced_order_elimination(seed, do_promote):
    _, net, ev, mv, state = random_state(seed, do_promote)
    order = state.induced_order()
    assert rel_close(state.bound(), relaxed_map_bound(net, ev, None, mv, order), 1e-9)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_sandwich_and_monotonicity_under_assertions(seed):
    rng, net, ev, mv, state = random_state(seed)
    previous = state.bound()
    for _ in range(4):
        random_assertions(rng, state, mv, 1)
        b = state.bound()
        assert le_rel(b, previous, 1e-9)
        previous = b
        masks = {v: state.allowed(v) for v in mv}
        _, map_p, pr_e = joint_map(net, ev, mv, masks)
        assert le_rel(map_p, b, 1e-9) and le_rel(b, pr_e, 1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_fixing_every_max_variable_is_exact(seed):
    rng, net, ev, mv, state = random_state(seed)
    full = {v: int(rng.integers(net.card(v))) for v in mv}
    tokens = [state.assert_equal(v, s) for v, s in full.items()]
    _, p, _ = joint_map(net, {**ev, **full}, [])
    assert rel_close(state.bound(), p, 1e-9) or (p == 0 and state.bound().is_zero())
    for t in reversed(tokens):
        state.retract(t)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_retract_restores_bit_exact(seed):
    rng, net, ev, mv, state = random_state(seed)
    before = state.bound()
    vb_before = {v: state.value_bounds(v) for v in mv}
    tokens = random_assertions(rng, state, mv, 5)
    state.bound()
    for t in reversed(tokens):
        state.retract(t)
    assert state.bound() == before
    for v in mv:
        vb = state.value_bounds(v)
        assert vb.scale_exp == vb_before[v].scale_exp
        assert np.array_equal(vb.values, vb_before[v].values)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_cache_matches_full_recompute(seed):
    rng, net, ev, mv, state = random_state(seed)
    check = PropagationState(state.jt, mv, state.root, full_recompute=True)
    state.bound()
    plan = [(int(rng.choice(mv)), rng.random()) for _ in range(5)]
    for v, r in plan:
        allowed = np.flatnonzero(state.allowed(v))
        s = int(allowed[int(r * len(allowed))])
        if r < 0.5 or len(allowed) == 1:
            state.assert_equal(v, s)
            check.assert_equal(v, s)
        else:
            state.assert_not_equal(v, s)
            check.assert_not_equal(v, s)
        assert state.bound() == check.bound()
        for u in mv:
            a, b = state.value_bounds(u), check.value_bounds(u)
            assert a.scale_exp == b.scale_exp and np.array_equal(a.values, b.values)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), do_promote=st.booleans())
def test_value_bounds_match_elimination_from_any_cluster(seed, do_promote):
    _, net, ev, mv, state = random_state(seed, do_promote)
    v = mv[0]
    for c, members in enumerate(state.cluster_vars):
        if v not in members:
            continue
        vb = state.value_bounds(v, cluster=c)
        order = [u for u in PropagationState(state.jt, mv, c).induced_order() if u != v]
        rest = [u for u in mv if u != v]
        for s in range(net.card(v)):
            expected = relaxed_map_bound(net, {**ev, v: s}, None, rest, order)
            assert rel_close(vb.bound(s), expected, 1e-9) or (
                expected.is_zero() and vb.bound(s).is_zero())


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_single_max_variable_bounds_are_exact_everywhere(seed):
    rng, net, ev, mv, _ = random_state(seed)
    v = mv[0]
    jt = build_jointree(net, ev, min_fill_order(network_graph(net, ev)))
    state = PropagationState(jt, [v])
    for c, members in enumerate(state.cluster_vars):
        if v in members:
            vb = state.value_bounds(v, cluster=c)
            for s in range(net.card(v)):
                _, p, _ = joint_map(net, {**ev, v: s}, [])
                assert rel_close(vb.bound(s), p, 1e-9) or (p == 0 and vb.bound(s).is_zero())
