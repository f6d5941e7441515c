import pytest
from hypothesis import given, settings

from helpers import corpus, programs
from memfair.consistency import ALL_MODELS, ModelId, consistent, derived, find_cycle, is_consistent
from memfair.enumeration import enumerate_consistent_graphs
from memfair.graphs import Event, ExecutionGraph, R, Relation, U, W, init_event

IX, IY = init_event("x"), init_event("y")


def sb(a: int, b: int) -> ExecutionGraph:
    wx, ry = Event(1, 0, W("x", 1)), Event(1, 1, R("y", a))
    wy, rx = Event(2, 0, W("y", 1)), Event(2, 1, R("x", b))
    rf = {ry: wy if a else IY, rx: wx if b else IX}
    return ExecutionGraph.build([IX, IY, wx, ry, wy, rx], rf, {"x": [IX, wx], "y": [IY, wy]})


def mp(a: int, b: int) -> ExecutionGraph:
    wx, wy = Event(1, 0, W("x", 1)), Event(1, 1, W("y", 1))
    ry, rx = Event(2, 0, R("y", a)), Event(2, 1, R("x", b))
    rf = {ry: wy if a else IY, rx: wx if b else IX}
    return ExecutionGraph.build([IX, IY, wx, wy, ry, rx], rf, {"x": [IX, wx], "y": [IY, wy]})


def two_rmw_same_source() -> ExecutionGraph:
    u1, u2 = Event(1, 0, U("x", 0, 1)), Event(2, 0, U("x", 0, 1))
    return ExecutionGraph.build([IX, u1, u2], {u1: IX, u2: IX}, {"x": [IX, u1, u2]})


def sb_rmws_weak() -> ExecutionGraph:
    f = init_event("f")
    wx, uf1, ry = Event(1, 0, W("x", 1)), Event(1, 1, U("f", 0, 0)), Event(1, 2, R("y", 0))
    wy, uf2, rx = Event(2, 0, W("y", 1)), Event(2, 1, U("f", 0, 0)), Event(2, 2, R("x", 0))
    rf = {uf1: f, uf2: uf1, ry: IY, rx: IX}
    return ExecutionGraph.build(
        [IX, IY, f, wx, uf1, ry, wy, uf2, rx], rf, {"x": [IX, wx], "y": [IY, wy], "f": [f, uf1, uf2]}
    )


@pytest.mark.parametrize(
    "g, expected",
    [
        (sb(0, 0), {"sc": False, "tso": True, "ra": True, "strongcoh": True}),
        (sb(1, 1), {"sc": True, "tso": True, "ra": True, "strongcoh": True}),
        (mp(1, 0), {"sc": False, "tso": False, "ra": False, "strongcoh": True}),
        (mp(0, 1), {"sc": True, "tso": True, "ra": True, "strongcoh": True}),
        (two_rmw_same_source(), {"sc": False, "tso": False, "ra": False, "strongcoh": False}),
        (sb_rmws_weak(), {"sc": False, "tso": False, "ra": False, "strongcoh": True}),
    ],
    ids=["sb00", "sb11", "mp10", "mp01", "2rmw", "sb_rmws"],
)
def test_litmus_graphs(g, expected):
    for m in ALL_MODELS:
        assert consistent(g, m) == expected[m.value], m
        assert bool(is_consistent(g, m)) == expected[m.value]


def test_sb_cycle_report():
    g = sb(0, 0)
    v = is_consistent(g, ModelId.SC)
    assert v.relation == "hb_sc"
    cyc = [g.events[i] for i in v.cycle]
    assert len(cyc) == 4 and cyc[0] == Event(1, 0, W("x", 1))
    rel = derived(g).hb_sc
    assert all((v.cycle[k], v.cycle[(k + 1) % 4]) in rel for k in range(4))


def test_find_cycle_prefers_short_then_lexicographic():
    r = Relation.from_pairs(5, [(3, 4), (4, 3), (0, 1), (1, 2), (2, 0)])
    assert find_cycle(r) == (3, 4)
    assert find_cycle(Relation.from_pairs(3, [(0, 1), (1, 2)])) is None
    assert find_cycle(Relation.from_pairs(3, [(2, 2)])) == (2,)


def test_mp_strongcoh_cycle_is_hb_free():
    g = mp(1, 0)
    d = derived(g)
    assert d.hb_ra.is_irreflexive() and d.sc_loc.is_irreflexive()
    assert not d.ra_loc.is_irreflexive()


def test_model_parse():
    assert ModelId.parse("TSO") is ModelId.TSO
    assert ModelId.parse("scoh") is ModelId.StrongCOH
    with pytest.raises(Exception):
        ModelId.parse("pso")


@settings(max_examples=40, deadline=None)
@given(programs(max_threads=3, max_events=5))
def test_model_strength_chain(p):
    """SC ⊆ TSO ⊆ RA ⊆ StrongCOH on every graph consistent under the weakest model."""
    for c in enumerate_consistent_graphs(p, ModelId.StrongCOH).graphs:
        g = c.graph
        verdicts = [consistent(g, m) for m in ALL_MODELS]
        for stronger, weaker in zip(verdicts, verdicts[1:]):
            assert weaker or not stronger


@pytest.mark.parametrize("m", ALL_MODELS, ids=str)
def test_consistency_is_prefix_closed_on_sb(m):
    from memfair.robustness import check_prefix_closedness

    for c in enumerate_consistent_graphs(corpus("sb"), m).graphs:
        assert check_prefix_closedness(c.graph, m, samples=10).ok
