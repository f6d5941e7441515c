"""Constructive conversions between machine traces and execution graphs.

Forward direction: read rf and mo off a finite trace.  Backward direction:
schedule the events of a consistent finite graph as a machine trace in which
every write eventually becomes visible to every thread.  Both directions are
the finite cores of the usual equivalence argument; the infinite case (where
prefix-finiteness of mo and fr guarantees that each scheduling step is
reached) is not executed here.
"""

from __future__ import annotations

import heapq
from typing import Iterable, Sequence

from .consistency import ModelId, consistent, derived
from .errors import E_CYCLIC, E_INCONSISTENT_INPUT, E_UNPROPAGATED_WRITE, MemfairError
from .graphs import READ, WRITE, Event, ExecutionGraph, Relation, init_event
from .operational import (
    AnnotatedTrace,
    Obs,
    Prop,
    PropMsg,
    RAState,
    Trace,
    TraceStep,
    _ra_default_read,
    annotate,
    machine_step,
)

# ---------------------------------------------------------------------------
# enumerations
# ---------------------------------------------------------------------------


def enumerate_respecting(n: int | Sequence, r: Relation, mask: int | None = None) -> list[int]:
    """Topological order of the indices in ``mask`` extending ``r``; ties go to the smaller index.

    ``n`` may be a count or a sequence of events (only its length is used).
    """
    n = n if isinstance(n, int) else len(n)
    mask = (1 << n) - 1 if mask is None else mask
    members = [i for i in range(n) if mask >> i & 1]
    indeg = {i: 0 for i in members}
    for i in members:
        for j in members:
            if r.rows[i] >> j & 1:
                if i == j:
                    raise MemfairError(E_CYCLIC, f"relation is reflexive at {i}")
                indeg[j] += 1
    heap = [i for i in members if indeg[i] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        i = heapq.heappop(heap)
        out.append(i)
        for j in members:
            if r.rows[i] >> j & 1:
                indeg[j] -= 1
                if indeg[j] == 0:
                    heapq.heappush(heap, j)
    if len(out) != len(members):
        raise MemfairError(E_CYCLIC, "relation has a cycle on the given events")
    return out


# ---------------------------------------------------------------------------
# traces to graphs
# ---------------------------------------------------------------------------


def _obs_events(steps: Iterable[TraceStep]) -> list[tuple[int, Event]]:
    count: dict[int, int] = {}
    out = []
    for i, st in enumerate(steps):
        if isinstance(st.label, Obs):
            tid = st.label.tid
            out.append((i, Event(tid, count.get(tid, 0), st.label.label)))
            count[tid] = count.get(tid, 0) + 1
    return out


def sc_trace_to_graph(t: AnnotatedTrace | Trace) -> ExecutionGraph:
    """rf: the latest earlier write to the location; mo: trace order."""
    locs = t.trace.locations if isinstance(t, AnnotatedTrace) else t.locations
    latest = {x: init_event(x) for x in locs}
    mo = {x: [init_event(x)] for x in locs}
    evs = list(latest.values())
    rf = {}
    for _, e in _obs_events(t.steps):
        evs.append(e)
        if e.label.kind != WRITE:
            rf[e] = latest[e.loc]
        if e.label.kind != READ:
            latest[e.loc] = e
            mo[e.loc].append(e)
    return ExecutionGraph.build(evs, rf, mo)


def tso_vis(t: AnnotatedTrace | Trace) -> dict[Event, int]:
    """Visibility index: the step of a read/RMW, the propagation step of a plain write."""
    steps = t.steps
    pending: dict[int, list[Event]] = {}
    vis: dict[Event, int] = {}
    obs = dict(_obs_events(steps))
    for i, st in enumerate(steps):
        lab = st.label
        if isinstance(lab, Obs):
            e = obs[i]
            if lab.label.kind == WRITE:
                pending.setdefault(lab.tid, []).append(e)
            else:
                vis[e] = i
        elif isinstance(lab, Prop):
            q = pending.get(lab.tid)
            if not q:
                raise MemfairError(E_UNPROPAGATED_WRITE, f"prop({lab.tid}) with an empty buffer at step {i}")
            vis[q.pop(0)] = i
    left = [e for q in pending.values() for e in q]
    if left:
        raise MemfairError(E_UNPROPAGATED_WRITE, f"writes never propagated: {', '.join(map(str, left))}")
    return vis


def tso_trace_to_graph(t: AnnotatedTrace | Trace) -> ExecutionGraph:
    """mo follows propagation order; a read takes the latest own buffered write, else the latest propagated one."""
    locs = t.trace.locations if isinstance(t, AnnotatedTrace) else t.locations
    vis = tso_vis(t)
    for x in locs:
        vis[init_event(x)] = -1
    obs = _obs_events(t.steps)
    writes = [e for e in vis if e.label.is_write]
    issued = {e: i for i, e in obs}
    rf = {}
    for i, e in obs:
        if e.label.kind == WRITE:
            continue
        x = e.loc
        own = [w for w in writes if w.tid == e.tid and w.loc == x and not w.is_init and issued[w] < i < vis[w]]
        if own and e.label.kind == READ:
            rf[e] = max(own, key=lambda w: w.sn)
        else:
            rf[e] = max((w for w in writes if w.loc == x and vis[w] < i), key=lambda w: vis[w])
    mo = {x: sorted((w for w in writes if w.loc == x), key=lambda w: vis[w]) for x in locs}
    return ExecutionGraph.build(list(vis), rf, mo)


def ra_trace_to_graph(t: AnnotatedTrace | Trace, m: ModelId | str = ModelId.RA) -> ExecutionGraph:
    """rf: the message each read observed; mo: the final timestamp order per location."""
    at = t if isinstance(t, AnnotatedTrace) else annotate(t)
    rf = {}
    count: dict[int, int] = {}
    for i, st in enumerate(at.steps):
        lab = st.label
        if not isinstance(lab, Obs):
            continue
        tid = lab.tid
        e = Event(tid, count.get(tid, 0), lab.label)
        count[tid] = e.sn + 1
        if lab.label.kind != WRITE:
            before = at.state_before(i)
            rf[e] = st.choice if st.choice is not None else _ra_default_read(before, tid, lab.label)
    final = at.states[-1] if at.states else at.trace.initial_state()
    mo = {x: [msg.ev for msg in msgs] for x, msgs in zip(final.locs, final.messages)}
    evs = [e for seq in mo.values() for e in seq] + list(rf)
    return ExecutionGraph.build(evs, rf, mo)


def trace_to_graph(t: AnnotatedTrace | Trace) -> ExecutionGraph:
    m = t.model if isinstance(t, AnnotatedTrace) else t.model
    if m is ModelId.SC:
        return sc_trace_to_graph(t)
    if m is ModelId.TSO:
        return tso_trace_to_graph(t)
    return ra_trace_to_graph(t, m)


# ---------------------------------------------------------------------------
# graphs to traces
# ---------------------------------------------------------------------------


def _trace_shell(g: ExecutionGraph, m: ModelId, steps: list[TraceStep]) -> Trace:
    nthreads = max(g.tids, default=0)
    return Trace(m, tuple(sorted(g.locations)), nthreads, tuple(steps))


def _non_init(g: ExecutionGraph) -> int:
    return ((1 << g.n) - 1) & ~g.init_mask


def _sc_backward(g: ExecutionGraph) -> list[TraceStep]:
    order = enumerate_respecting(g.n, derived(g).hb_sc, _non_init(g))
    return [TraceStep(Obs(g.events[i].tid, g.events[i].label)) for i in order]


def _tso_backward(g: ExecutionGraph) -> list[TraceStep]:
    """For each event in an hb_tso order: an RMW runs directly; a read first
    issues the po-earlier writes of its thread; a write is issued if needed
    and then propagated."""
    order = enumerate_respecting(g.n, derived(g).hb_tso, _non_init(g))
    per_thread = {tid: sorted((g.events[i] for i in range(g.n) if g.events[i].tid == tid), key=lambda e: e.sn)
                  for tid in g.tids}
    done: dict[int, int] = {tid: 0 for tid in g.tids}  # thread events already issued
    steps: list[TraceStep] = []

    def issue_upto(tid: int, sn: int) -> None:
        evs = per_thread[tid]
        while done[tid] <= sn:
            e = evs[done[tid]]
            if e.label.kind != WRITE:
                raise MemfairError(E_INCONSISTENT_INPUT, f"cannot issue past {e}")
            steps.append(TraceStep(Obs(tid, e.label)))
            done[tid] += 1

    for i in order:
        e = g.events[i]
        if e.label.kind == WRITE:
            issue_upto(e.tid, e.sn)
            steps.append(TraceStep(Prop(e.tid)))
        else:
            issue_upto(e.tid, e.sn - 1)
            steps.append(TraceStep(Obs(e.tid, e.label)))
            done[e.tid] += 1
    return steps


def ra_tmap(g: ExecutionGraph) -> list[int]:
    """Timestamps: mo position for writes (init at 0), the source's for reads."""
    tmap = [0] * g.n
    for x in g.locations:
        for k, w in enumerate(g.writes_to(x)):
            tmap[w] = k
    for w, r in g.rf:
        if not g.events[r].label.is_write:
            tmap[r] = tmap[w]
    return tmap


def _view_rel(g: ExecutionGraph, m: ModelId) -> Relation:
    """hb_ra? for RA; rf?;po? for StrongCOH."""
    ident = Relation.identity(g.n)
    if m is ModelId.StrongCOH:
        return (g.rf_rel | ident).compose(g.po | ident)
    return derived(g).hb_ra | ident


def safepoints(g: ExecutionGraph, m: ModelId, w: int, tmap: Sequence[int] | None = None) -> int:
    """Events that do not view-precede ``w`` or a same-location event with a smaller timestamp (bitmask)."""
    tmap = ra_tmap(g) if tmap is None else tmap
    x = g.events[w].loc
    target = (1 << w) | sum(1 << e for e in range(g.n) if g.events[e].loc == x and tmap[e] < tmap[w])
    blocked = _view_rel(g, m).domain_of(target)
    return ((1 << g.n) - 1) & ~blocked


def tslots(g: ExecutionGraph, m: ModelId, order: Sequence[int]) -> dict[tuple[int, int], int]:
    """``tslot(tid, w)`` for every write ``w`` in ``order`` and every thread of ``g``: the earliest
    position at or after ``w`` from which all later events of ``tid`` are safe points of ``w``."""
    tmap = ra_tmap(g)
    pos = {e: k for k, e in enumerate(order)}
    out = {}
    for w in order:
        if not g.events[w].label.is_write:
            continue
        safe = safepoints(g, m, w, tmap)
        for tid in g.tids:
            unsafe = [pos[e] for e in order if g.events[e].tid == tid and not safe >> e & 1]
            out[(tid, w)] = max([pos[w]] + unsafe)
    return out


def _ra_backward(g: ExecutionGraph, m: ModelId) -> list[TraceStep]:
    order = enumerate_respecting(g.n, derived(g).hb_ra, _non_init(g))
    slots = tslots(g, m, order)
    tmap = ra_tmap(g)
    rf = g.rf_source
    steps: list[TraceStep] = []
    present = {x: [g.index[init_event(x)]] for x in g.locations}  # writes placed so far, in mo order
    for k, i in enumerate(order):
        e = g.events[i]
        if e.label.kind == WRITE:
            pred = max((w for w in present[e.loc] if tmap[w] < tmap[i]), key=lambda w: tmap[w])
            steps.append(TraceStep(Obs(e.tid, e.label), g.events[pred]))
        else:
            steps.append(TraceStep(Obs(e.tid, e.label), g.events[rf[i]]))
        if e.label.is_write:
            present[e.loc].append(i)
        best: dict[tuple[int, str], int] = {}
        for (tid, w), s in slots.items():
            if s == k and tid != g.events[w].tid:
                key = (tid, g.events[w].loc)
                if key not in best or tmap[w] > tmap[best[key]]:
                    best[key] = w
        for (tid, _), w in sorted(best.items()):
            steps.append(TraceStep(PropMsg(tid, g.events[w])))
    return steps


def _drop_disabled_props(at_trace: Trace) -> Trace:
    """Skip propagation steps that would not raise the view (already covered by a read)."""
    s = at_trace.initial_state()
    kept = []
    for st in at_trace.steps:
        if isinstance(st.label, PropMsg):
            assert isinstance(s, RAState)
            if s.view_ts(st.label.tid, st.label.msg.loc) >= s.ts(st.label.msg):
                continue
        s = machine_step(at_trace.model, s, st.label, st.choice)
        kept.append(st)
    return Trace(at_trace.model, at_trace.locations, at_trace.nthreads, tuple(kept))


def expected_ra_views(g: ExecutionGraph, m: ModelId, order: Sequence[int]) -> list[dict[int, dict[str, int]]]:
    """Thread views (location -> writer index) before each step of ``order``, computed from rf, mo and tslot alone."""
    tmap = ra_tmap(g)
    slots = tslots(g, m, order)
    inits = {x: g.index[init_event(x)] for x in g.locations}
    tv = {tid: dict(inits) for tid in g.tids}
    full: dict[int, dict[str, int]] = {}
    rf = g.rf_source

    def up(v: dict[str, int], w: int) -> None:
        x = g.events[w].loc
        if tmap[w] > tmap[v[x]]:
            v[x] = w

    out = []
    for k, i in enumerate(order):
        out.append({tid: dict(v) for tid, v in tv.items()})
        e = g.events[i]
        v = tv[e.tid]
        if e.label.kind != WRITE:
            src = rf[i]
            if m is ModelId.StrongCOH or src not in full:
                up(v, src)
            else:
                for w in full[src].values():
                    up(v, w)
        if e.label.is_write:
            up(v, i)
            full[i] = dict(v)
        for (tid, w), s in slots.items():
            if s == k:
                up(tv[tid], w)
    return out


def graph_to_fair_trace(g: ExecutionGraph, m: ModelId | str) -> AnnotatedTrace:
    """A machine trace whose behavior is that of ``g``; every write is propagated everywhere by the end."""
    m = ModelId.parse(m)
    if not consistent(g, m):
        raise MemfairError(E_INCONSISTENT_INPUT, f"graph is not {m}-consistent")
    if m is ModelId.SC:
        steps = _sc_backward(g)
    elif m is ModelId.TSO:
        steps = _tso_backward(g)
    else:
        steps = _ra_backward(g, m)
    trace = _trace_shell(g, m, steps)
    if m in (ModelId.RA, ModelId.StrongCOH):
        trace = _drop_disabled_props(trace)
    return annotate(trace)


def ra_view_agreement(g: ExecutionGraph, m: ModelId | str) -> bool:
    """Cross-check: thread views from machine replay equal those derived from rf, mo and tslot."""
    m = ModelId.parse(m)
    order = enumerate_respecting(g.n, derived(g).hb_ra, _non_init(g))
    expected = expected_ra_views(g, m, order)
    at = graph_to_fair_trace(g, m)
    k = 0
    for i, st in enumerate(at.steps):
        if not isinstance(st.label, Obs):
            continue
        s = at.state_before(i)
        for tid, view in expected[k].items():
            got = {x: s.views[tid - 1][s.li(x)] for x in s.locs}
            if {x: g.events[w] for x, w in view.items()} != got:
                return False
        k += 1
    return True
