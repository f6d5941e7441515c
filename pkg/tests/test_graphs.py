import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import LITMUS, bounds_for, brute_fr, corpus
from memfair.consistency import ALL_MODELS, ModelId
from memfair.enumeration import enumerate_consistent_graphs
from memfair.errors import E_CYCLIC, E_NOT_PREFIX_CLOSED, MemfairError
from memfair.graphs import (
    Event,
    ExecutionGraph,
    R,
    Relation,
    U,
    W,
    check_n_total,
    check_prefix_finite_bounded,
    check_wellformed,
    from_read,
    init_event,
    mo_maximal,
    prefix_closure,
    restrict_to_prefix,
)


def sb_weak_graph() -> ExecutionGraph:
    ix, iy = init_event("x"), init_event("y")
    wx, ry = Event(1, 0, W("x", 1)), Event(1, 1, R("y", 0))
    wy, rx = Event(2, 0, W("y", 1)), Event(2, 1, R("x", 0))
    return ExecutionGraph.build([ix, iy, wx, ry, wy, rx], {ry: iy, rx: ix}, {"x": [ix, wx], "y": [iy, wy]})


# -- relation algebra against set arithmetic -----------------------------------

N = 6
pair_sets = st.sets(st.tuples(st.integers(0, N - 1), st.integers(0, N - 1)), max_size=14)


def closure(pairs: set) -> set:
    out = set(pairs)
    while True:
        extra = {(a, d) for a, b in out for c, d in out if b == c} - out
        if not extra:
            return out
        out |= extra


@given(pair_sets, pair_sets)
def test_relation_ops_match_sets(a, b):
    ra, rb = Relation.from_pairs(N, a), Relation.from_pairs(N, b)
    assert set((ra | rb).pairs()) == a | b
    assert set((ra & rb).pairs()) == a & b
    assert set((ra - rb).pairs()) == a - b
    assert set(ra.compose(rb).pairs()) == {(x, z) for x, y in a for y2, z in b if y == y2}
    assert set(ra.inverse().pairs()) == {(y, x) for x, y in a}
    assert set(ra.plus().pairs()) == closure(a)
    assert ra.is_acyclic() == all(x != y for x, y in closure(a))


@given(pair_sets, st.integers(0, 4))
def test_power_and_upto(a, k):
    r = Relation.from_pairs(N, a)
    pk = Relation.identity(N)
    for _ in range(k):
        pk = pk.compose(r)
    assert r.power(k) == pk
    expect = set()
    for j in range(1, k + 1):
        expect |= set(r.power(j).pairs())
    assert set(r.upto(k).pairs()) == expect


def test_from_read_is_fr():
    g = sb_weak_graph()
    assert set(from_read(g).pairs()) == set(g.fr.pairs()) == brute_fr(g)
    assert len(g.fr) == 2


@pytest.mark.parametrize("name", LITMUS)
@pytest.mark.parametrize("m", ALL_MODELS, ids=str)
def test_fr_oracle_on_enumerated_graphs(name, m):
    for c in enumerate_consistent_graphs(corpus(name), m).graphs:
        assert set(c.graph.fr.pairs()) == brute_fr(c.graph)


# -- well-formedness ----------------------------------------------------------------


def test_wellformed_accepts_sb():
    assert check_wellformed(sb_weak_graph())


def test_wellformed_rejects_value_mismatch():
    ix = init_event("x")
    r = Event(1, 0, R("x", 1))
    assert not check_wellformed(ExecutionGraph.build([ix, r], {r: ix}, {"x": [ix]}))


def test_wellformed_rejects_missing_rf_and_sn_gap():
    ix = init_event("x")
    assert not check_wellformed(ExecutionGraph.build([ix, Event(1, 0, R("x", 0))], {}, {"x": [ix]}))
    w = Event(1, 1, W("x", 1))
    assert not check_wellformed(ExecutionGraph.build([ix, w], {}, {"x": [ix, w]}))


def test_mo_maximal_and_rmw():
    ix = init_event("x")
    u = Event(1, 0, U("x", 0, 1))
    g = ExecutionGraph.build([ix, u], {u: ix}, {"x": [ix, u]})
    assert mo_maximal(g, "x") == u
    assert g.rmw_mask == 1 << g.index[u]


# -- serialization ----------------------------------------------------------------------


def test_json_round_trip():
    g = sb_weak_graph()
    assert ExecutionGraph.from_json(json.dumps(g.to_json())) == g


def test_dot_output():
    dot = sb_weak_graph().to_dot()
    assert dot.startswith("digraph G {")
    assert dot.count('label="fr"') == 2 and dot.count('label="rf"') == 2
    assert dot.count("style=solid") == 2


# -- prefixes -------------------------------------------------------------------------------


def test_restrict_to_prefix():
    g = sb_weak_graph()
    idx = g.index
    keep = [init_event("x"), init_event("y"), Event(1, 0, W("x", 1))]
    h = restrict_to_prefix(g, keep)
    assert h.n == 3 and check_wellformed(h)
    with pytest.raises(MemfairError) as err:
        restrict_to_prefix(g, keep[:2] + [Event(1, 1, R("y", 0))])
    assert err.value.code == E_NOT_PREFIX_CLOSED
    with pytest.raises(MemfairError):
        restrict_to_prefix(g, [Event(1, 0, W("x", 1))])
    full = prefix_closure(g, 1 << idx[Event(2, 1, R("x", 0))])
    assert full == g.init_mask | 1 << idx[Event(2, 0, W("y", 1))] | 1 << idx[Event(2, 1, R("x", 0))]


# -- n-totality and the compression law -------------------------------------------------------


def test_n_total_small_cases():
    chain = Relation.from_pairs(3, [(0, 1), (1, 2)]).plus()
    assert check_n_total(chain, 0b111, 1)
    empty = Relation.empty(3)
    assert not check_n_total(empty, 0b111, 2)
    assert check_n_total(empty, 0b111, 3)


def test_compression_law_on_a_chain():
    chain = Relation.from_pairs(5, [(i, i + 1) for i in range(4)])
    rep = check_prefix_finite_bounded(chain, 2)
    assert rep.n_total is False  # the chain is not transitively closed
    rep = check_prefix_finite_bounded(chain.plus(), 1)
    assert rep.n_total and rep.compression_law
    with pytest.raises(MemfairError) as err:
        check_prefix_finite_bounded(Relation.from_pairs(2, [(0, 1), (1, 0)]), 1)
    assert err.value.code == E_CYCLIC


@pytest.mark.parametrize("name", LITMUS + ["spinlock_client"])
def test_po_is_n_total(name):
    p = corpus(name)
    for c in enumerate_consistent_graphs(p, ModelId.SC, bounds_for(p)).graphs:
        g = c.graph
        non_init = ((1 << g.n) - 1) & ~g.init_mask
        n = len(g.tids)
        assert check_n_total(g.po, non_init, n)
        if n > 1:
            assert not check_n_total(g.po, non_init, n - 1)


@settings(max_examples=40, deadline=None)
@given(pair_sets)
def test_compression_law_property(a):
    r = Relation.from_pairs(N, a)
    if not r.is_acyclic():
        return
    for n in (1, 2):
        rep = check_prefix_finite_bounded(r, n)
        if rep.n_total:
            assert rep.compression_law
