"""Acceptance criteria, one test per criterion.

Each test records a single ``PASS``/``FAIL`` line (printed in the terminal
summary by conftest.py and directly when run with ``-s``) and then asserts.
Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import itertools
import time

import pytest
from hypothesis import HealthCheck, given, settings

from helpers import LITMUS, bounds_for, brute_fr, corpus, naive_graphs, programs
from memfair.consistency import ALL_MODELS, consistent, derived
from memfair.correspondence import graph_to_fair_trace, trace_to_graph
from memfair.enumeration import check_outcome, enumerate_consistent_graphs, graph_key
from memfair.errors import E_NOT_ENABLED, MemfairError
from memfair.graphs import Event, ExecutionGraph, R, W, check_n_total, check_prefix_finite_bounded, init_event, mo_maximal
from memfair.operational import explore_behaviors
from memfair.robustness import check_finite_robustness, check_prefix_closedness, is_minimal_witness
from memfair.termination import ALL_TERMINATE, MAY_DIVERGE, UNSUPPORTED, analyze_termination, read_extension_preserves

RESULTS: dict[int, str] = {}

SC, TSO, RA, SCOH = ALL_MODELS


def record(n: int, title: str, failures: list[str], elapsed: float, detail: str = "") -> None:
    verdict = "PASS" if not failures else "FAIL"
    line = f"{verdict} criterion {n}: {title} [{elapsed:.1f}s]"
    if detail:
        line += f" {detail}"
    if failures:
        line += " :: " + "; ".join(failures[:5])
    RESULTS[n] = line
    print(line)
    assert not failures, line


# -- 1 ----------------------------------------------------------------------------------------

LITMUS_MATRIX = [
    ("sb", "a=0 && b=0", {SC: False, TSO: True, RA: True, SCOH: True}),
    ("mp", "a=1 && b=0", {SC: False, TSO: False, RA: False, SCOH: True}),
    ("2rmw", "a=0 && b=0", {SC: False, TSO: False, RA: False, SCOH: False}),
    ("sb_rmws", "a=0 && b=0", {SC: False, TSO: False, RA: False, SCOH: True}),
]


def test_criterion_1_litmus_matrix():
    t0 = time.time()
    failures = []
    slowest = 0.0
    for name, query, row in LITMUS_MATRIX:
        for m, allowed in row.items():
            t = time.time()
            v = check_outcome(corpus(name), m, query)
            dt = time.time() - t
            slowest = max(slowest, dt)
            if v.allowed != allowed:
                failures.append(f"{name}/{m}: got {'allowed' if v.allowed else 'forbidden'}")
            if dt >= 5:
                failures.append(f"{name}/{m}: {dt:.1f}s >= 5s")
            if v.allowed and not consistent(v.witness, m):
                failures.append(f"{name}/{m}: witness inconsistent")
    record(1, "litmus matrix", failures, time.time() - t0, f"slowest {slowest:.2f}s (limit 5s)")


# -- 2 ----------------------------------------------------------------------------------------


def _mcs_witness_problems(g: ExecutionGraph, stuck: tuple[int, ...]) -> list[str]:
    out = []
    if stuck != (1,):
        out.append(f"stuck threads {stuck}")
    last = max((e for e in g.events if e.tid == 1), key=lambda e: e.sn)
    if last.label != R("a_locked", 1):
        out.append(f"stuck read is {last}")
    else:
        src = g.events[g.rf_source[g.index[last]]]
        if src.label != W("a_locked", 1) or mo_maximal(g, "a_locked") != src:
            out.append(f"stuck read source {src} is not the mo-maximal W(a_locked,1)")
    cyc = g.po.compose(g.rf_rel).compose(g.po).compose(g.mo_rel)
    if cyc.is_irreflexive():
        out.append("no po;rf;po;mo cycle")
    if not derived(g).sc_loc.is_irreflexive():
        out.append("sc_loc is cyclic")
    if not consistent(g, SCOH):
        out.append("witness inconsistent")
    return out


def test_criterion_2_termination_verdicts():
    t0 = time.time()
    cases = []
    for name in ("spinloop", "rloop", "spinlock_client", "spinlock_client3"):
        cases += [(name, None, m, ALL_TERMINATE) for m in ALL_MODELS]
    for rounds in (1, 2):
        cases += [("ticketlock_client", rounds, m, ALL_TERMINATE) for m in ALL_MODELS]
    cases += [("mcs_client", None, m, ALL_TERMINATE) for m in (SC, TSO, RA)]
    cases += [("mcs_client_nofence", None, SCOH, MAY_DIVERGE)]
    cases += [("wwrloop", None, m, UNSUPPORTED) for m in ALL_MODELS]
    failures = []
    slowest = 0.0
    for name, rounds, m, expected in cases:
        t = time.time()
        v = analyze_termination(corpus(name, rounds), m)
        dt = time.time() - t
        slowest = max(slowest, dt)
        tag = f"{name}{'' if rounds is None else f'x{rounds}'}/{m}"
        if v.outcome != expected:
            failures.append(f"{tag}: {v.outcome}")
        elif expected == MAY_DIVERGE:
            failures += [f"{tag}: {msg}" for msg in _mcs_witness_problems(v.witness, v.stuck_threads)]
        if dt >= 60:
            failures.append(f"{tag}: {dt:.1f}s >= 60s")
    record(2, "termination verdicts", failures, time.time() - t0, f"{len(cases)} cases, slowest {slowest:.1f}s (limit 60s)")


# -- 3 ----------------------------------------------------------------------------------------


def test_criterion_3_operational_declarative_equivalence():
    t0 = time.time()
    failures = []
    # the litmus programs, plus spinloop programs at one spin iteration
    for name in LITMUS + ["rloop", "spinlock_client", "spinlock_client3"]:
        p = corpus(name)
        b = bounds_for(p)
        for m in ALL_MODELS:
            op = explore_behaviors(p, m, b)
            dec = enumerate_consistent_graphs(p, m, b).behaviors()
            if op.truncated or op.behaviors != dec:
                failures.append(f"{name}/{m}: {len(op.behaviors)} operational vs {len(dec)} declarative")
    elapsed = time.time() - t0
    if elapsed >= 600:
        failures.append(f"{elapsed:.0f}s >= 600s")
    record(3, "operational = declarative behaviors", failures, elapsed, f"{len(LITMUS) + 3} programs x 4 models (limit 600s)")


# -- 4 ----------------------------------------------------------------------------------------

ROUND_TRIP_PROGRAMS = [
    ("sb", None), ("mp", None), ("2rmw", None), ("sb_rmws", None), ("hb_acyclic", None),
    ("spinloop", None), ("rloop", None), ("spinlock_client", None), ("spinlock_client3", None),
    ("ticketlock_client", 1), ("ticketlock_client", 2), ("mcs_client", None), ("mcs_client_nofence", None),
]


def test_criterion_4_round_trips():
    t0 = time.time()
    failures = []
    total = 0
    for name, rounds in ROUND_TRIP_PROGRAMS:
        p = corpus(name, rounds)
        for m in ALL_MODELS:
            for c in enumerate_consistent_graphs(p, m, bounds_for(p)).graphs:
                total += 1
                g = c.graph
                try:
                    h = trace_to_graph(graph_to_fair_trace(g, m))
                except MemfairError as err:
                    failures.append(f"{name}/{m}: {err.code}" + (" (replay)" if err.code == E_NOT_ENABLED else ""))
                    continue
                if h.behavior() != g.behavior() or not consistent(h, m):
                    failures.append(f"{name}/{m}: graph {graph_key(g)[:1]} does not round-trip")
    record(4, "correspondence round-trips", failures, time.time() - t0, f"{total} graphs, {total - len(failures)} ok")


# -- 5 ----------------------------------------------------------------------------------------


def _sb_weak() -> ExecutionGraph:
    ix, iy = init_event("x"), init_event("y")
    wx, ry = Event(1, 0, W("x", 1)), Event(1, 1, R("y", 0))
    wy, rx = Event(2, 0, W("y", 1)), Event(2, 1, R("x", 0))
    return ExecutionGraph.build([ix, iy, wx, ry, wy, rx], {ry: iy, rx: ix}, {"x": [ix, wx], "y": [iy, wy]})


def test_criterion_5_robustness():
    t0 = time.time()
    failures = []
    lock = corpus("spinlock_client")
    full = bounds_for(lock, cap=2)
    longest = max(len(tp.instrs) for tp in lock.threads)
    if full.max_events_per_thread < longest:
        failures.append(f"event bound {full.max_events_per_thread} below client size {longest}")
    for m in (TSO, RA, SCOH):
        if not check_finite_robustness(lock, m, full).robust:
            failures.append(f"spinlock_client/{m} not robust")
    v = check_finite_robustness(corpus("sb"), TSO)
    if v.robust or graph_key(v.witness) != graph_key(_sb_weak()) or not is_minimal_witness(v.witness, TSO):
        failures.append("sb/tso witness is not the weak store-buffering graph")
    robust = 0
    for name, rounds in ROUND_TRIP_PROGRAMS[:9]:
        p = corpus(name, rounds)
        b = bounds_for(p, cap=2)
        for m in (TSO, RA, SCOH):
            if not check_finite_robustness(p, m, b).robust:
                continue
            robust += 1
            weak = explore_behaviors(p, m).behaviors if name in LITMUS else enumerate_consistent_graphs(p, m, b).behaviors()
            if weak != enumerate_consistent_graphs(p, SC, b).behaviors():
                failures.append(f"{name}/{m}: robust but behaviors differ from SC")
    record(5, "robustness", failures, time.time() - t0, f"transfer checked on {robust} robust program/model pairs")


# -- 6 ----------------------------------------------------------------------------------------


def test_criterion_6_relation_properties():
    t0 = time.time()
    failures = []
    graphs = []
    for name in LITMUS + ["spinlock_client", "mcs_client_nofence"]:
        p = corpus(name)
        for m in ALL_MODELS:
            graphs += [(m, c.graph) for c in enumerate_consistent_graphs(p, m, bounds_for(p)).graphs]
    lawful = 0
    for k, (m, g) in enumerate(graphs):
        n = len(g.tids)
        non_init = ((1 << g.n) - 1) & ~g.init_mask
        if n and not check_n_total(g.po, non_init, n):
            failures.append(f"po not {n}-total")
        parts = [g.po, g.rf_rel, g.mo_rel, g.fr]
        for r in range(1, 5):
            for combo in itertools.combinations(parts, r):
                u = combo[0]
                for extra in combo[1:]:
                    u = u | extra
                if not u.is_acyclic():
                    continue
                for rel in (u, u.plus()):
                    rep = check_prefix_finite_bounded(rel, max(n, 1), non_init)
                    if rep.n_total:
                        lawful += 1
                        if not rep.compression_law:
                            failures.append("compression law violated")
        if not check_prefix_closedness(g, m, samples=5, seed=k).ok:
            failures.append(f"{m}: consistency not prefix-closed")
        if set(g.fr.pairs()) != brute_fr(g):
            failures.append("fr differs from brute force")
        adds = [(tid, x) for tid in list(g.tids) + [max(g.tids, default=0) + 1] for x in g.locations]
        if not read_extension_preserves(g, m, adds):
            failures.append(f"{m}: read extension breaks consistency")
    elapsed = time.time() - t0
    if elapsed >= 60:
        failures.append(f"{elapsed:.0f}s >= 60s")
    if not lawful:
        failures.append("no n-total union exercised the compression law")
    record(6, "relation-algebra properties", failures, elapsed, f"{len(graphs)} graphs, {lawful} n-total unions (limit 60s)")


# -- 7 ----------------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_7_enumeration_oracle():
    t0 = time.time()
    failures: list[str] = []
    checked = [0]

    def compare(p) -> None:
        expected = naive_graphs(p, ALL_MODELS)
        for m in ALL_MODELS:
            got = {graph_key(c.graph) for c in enumerate_consistent_graphs(p, m).terminated}
            if got != expected[m]:
                failures.append(f"{p.name}/{m}: {len(got)} enumerated vs {len(expected[m])} naive")
        checked[0] += 1

    for name in ("sb", "mp", "2rmw", "sb_rmws"):
        compare(corpus(name))

    @settings(max_examples=40, deadline=None, database=None, suppress_health_check=list(HealthCheck))
    @given(programs(max_threads=3, max_events=6))
    def sampled(p):
        compare(p)

    sampled()
    record(7, "enumeration = naive oracle", failures, time.time() - t0, f"{checked[0]} programs with <= 6 events")
