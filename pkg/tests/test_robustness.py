import pytest

from helpers import LITMUS, bounds_for, corpus
from memfair.consistency import ALL_MODELS, ModelId, consistent
from memfair.enumeration import enumerate_consistent_graphs, graph_key
from memfair.graphs import Event, ExecutionGraph, R, W, init_event
from memfair.program import parse_program
from memfair.robustness import (
    check_finite_robustness,
    check_prefix_closedness,
    is_minimal_witness,
    proper_prefixes,
)


def sb_weak() -> ExecutionGraph:
    ix, iy = init_event("x"), init_event("y")
    wx, ry = Event(1, 0, W("x", 1)), Event(1, 1, R("y", 0))
    wy, rx = Event(2, 0, W("y", 1)), Event(2, 1, R("x", 0))
    return ExecutionGraph.build([ix, iy, wx, ry, wy, rx], {ry: iy, rx: ix}, {"x": [ix, wx], "y": [iy, wy]})


def test_sb_not_robust_under_tso():
    v = check_finite_robustness(corpus("sb"), "tso")
    assert not v.robust
    assert graph_key(v.witness) == graph_key(sb_weak())
    assert is_minimal_witness(v.witness, "tso")
    assert len(v.cycle) == 4
    assert v.to_json()["robust"] is False


def test_sb_prefixes():
    masks = proper_prefixes(sb_weak())
    # per thread 0, 1 or 2 events, minus the full graph; reads of init need nothing else
    assert len(masks) == 8


@pytest.mark.parametrize("m", [ModelId.TSO, ModelId.RA, ModelId.StrongCOH], ids=str)
def test_spinlock_is_robust(m):
    p = corpus("spinlock_client")
    v = check_finite_robustness(p, m, bounds_for(p, cap=2))
    assert v.robust and v.witness is None and v.graphs_checked > 0


def test_single_thread_is_robust():
    p = parse_program("locations x y; thread 1 { store(x, 1); a = load(x); b = FADD(y, a); }")
    for m in ALL_MODELS:
        assert check_finite_robustness(p, m).robust


def test_litmus_robustness_table():
    expect = {
        "sb": {"tso": False, "ra": False, "strongcoh": False},
        "mp": {"tso": True, "ra": True, "strongcoh": False},
        "2rmw": {"tso": True, "ra": True, "strongcoh": True},
        "sb_rmws": {"tso": True, "ra": True, "strongcoh": False},
        "hb_acyclic": {"tso": False, "ra": False, "strongcoh": False},
    }
    for name, row in expect.items():
        for m, robust in row.items():
            v = check_finite_robustness(corpus(name), m)
            assert v.robust == robust, (name, m)
            if not robust:
                assert is_minimal_witness(v.witness, m)


@pytest.mark.parametrize("name", LITMUS + ["spinlock_client"])
@pytest.mark.parametrize("m", [ModelId.TSO, ModelId.RA, ModelId.StrongCOH], ids=str)
def test_robustness_transfers_behaviors(name, m):
    p = corpus(name)
    b = bounds_for(p, cap=2)
    if not check_finite_robustness(p, m, b).robust:
        return
    weak = enumerate_consistent_graphs(p, m, b).behaviors()
    assert weak == enumerate_consistent_graphs(p, ModelId.SC, b).behaviors()


@pytest.mark.parametrize("m", ALL_MODELS, ids=str)
def test_prefix_closedness_on_enumerated_graphs(m):
    graphs = []
    for name in LITMUS + ["spinlock_client"]:
        p = corpus(name)
        graphs += [c.graph for c in enumerate_consistent_graphs(p, m, bounds_for(p)).graphs]
    for k, g in enumerate(graphs[:50]):
        assert consistent(g, m)
        assert check_prefix_closedness(g, m, samples=20, seed=k).ok
