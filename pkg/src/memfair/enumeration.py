"""Exhaustive enumeration of consistent execution graphs of a bounded program.

The search adds one event at a time.  A read picks any existing write to its
location as rf source; a plain write is inserted at every mo position after
the initialization write; an RMW goes directly after the write it reads (any
other position is inconsistent in all four models).  Every partial graph is a
po∪rf-prefix of its extensions, so inconsistent partial graphs are pruned.
Partial graphs are memoized, which collapses the many interleavings that
reach the same graph.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

from .consistency import ModelId, consistent
from .errors import E_BOUND_EXCEEDED, MemfairError
from .graphs import READ, RMW, Event, ExecutionGraph, Label, init_event
from .program import (
    ConcurrentProgram,
    Expr,
    ThreadLoops,
    ThreadProgram,
    ThreadState,
    detect_spinloops,
    eval_assertion,
    parse_assertion,
)


@dataclass(frozen=True)
class ExplorationBounds:
    max_events_per_thread: int = 16
    spinloop_cap: int | None = None  # None: unbounded (only max_events applies)
    value_domain: frozenset[int] | None = None  # program-level label domain; graphs take values from writes

    def __post_init__(self):
        if self.max_events_per_thread < 1 or (self.spinloop_cap is not None and self.spinloop_cap < 1):
            raise ValueError("bounds must be at least 1")


# ---------------------------------------------------------------------------
# per-thread run tracking (shared with the operational explorer)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThreadRun:
    """Parked thread state plus bookkeeping of the spinloop it is in."""

    state: ThreadState
    nevents: int = 0
    loop: int | None = None  # header pc of the spinloop being executed
    start_state: ThreadState | None = None
    start_len: int = 0
    done: int = 0  # completed iterations since the loop was entered
    last_iter: tuple[int, int] | None = None  # sn range of the last completed iteration
    bad_iter: bool = False  # a completed iteration wrote or changed the state


def _track(loops: ThreadLoops, run: ThreadRun, path: tuple[int, ...], labels: tuple[Label, ...]) -> ThreadRun:
    new_state = run.state
    loop, start_state, start_len = run.loop, run.start_state, run.start_len
    done, last_iter, bad = run.done, run.last_iter, run.bad_iter
    n = len(labels)
    edges = list(zip(path, path[1:]))
    if n == 0 and path and path[0] in loops.spin_headers:
        edges.insert(0, (-1, path[0]))
    headers = loops.spin_headers
    for a, b in edges:
        be = loops.spin_back_edges.get((a, b))
        if be is not None and loop == be.header:
            seg = labels[start_len:]
            if seg and all(l.kind == READ for l in seg) and new_state == start_state:
                done += 1
                last_iter = (start_len, n - 1)
            else:
                bad = True
            start_len, start_state = n, new_state
            continue
        if loop is not None and b not in headers[loop].body:
            loop, start_state, done = None, None, 0
        if loop is None and b in headers:
            loop, start_state, start_len, done = b, new_state, n, 0
    return ThreadRun(new_state, n, loop, start_state, start_len, done, last_iter, bad)


def initial_run(tp: ThreadProgram, loops: ThreadLoops) -> ThreadRun:
    st, path = tp.initial()
    return _track(loops, ThreadRun(st), path, ())


def advance_run(tp: ThreadProgram, loops: ThreadLoops, run: ThreadRun, label: Label, labels: tuple[Label, ...]) -> ThreadRun:
    """Step the thread by ``label``; ``labels`` is its full label sequence including ``label``."""
    st, path = tp.step(run.state, label)
    return _track(loops, replace(run, state=st), path, labels)


def in_spinloop(loops: ThreadLoops, run: ThreadRun) -> bool:
    return run.loop is not None and not run.bad_iter and run.state.pc in loops.spin_headers[run.loop].body


def at_cap(run: ThreadRun, cap: int | None) -> bool:
    """Parked at the start of an iteration after ``cap`` completed iterations."""
    return cap is not None and run.loop is not None and run.done >= cap and run.nevents == run.start_len


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompleteGraph:
    graph: ExecutionGraph
    status: str  # "terminated" or "stuck"
    stuck_threads: tuple[int, ...] = ()
    final_regs: tuple[tuple[str, int], ...] = ()
    last_iterations: tuple[tuple[int, tuple[int, int]], ...] = ()

    @property
    def registers(self) -> dict[str, int]:
        return dict(self.final_regs)


@dataclass
class EnumerationStats:
    explored: int = 0
    pruned: int = 0
    truncated: int = 0
    bad_iterations: int = 0


@dataclass
class EnumerationResult:
    graphs: list[CompleteGraph]
    stats: EnumerationStats = field(default_factory=EnumerationStats)
    partial: list[ExecutionGraph] | None = None

    @property
    def terminated(self) -> list[CompleteGraph]:
        return [c for c in self.graphs if c.status == "terminated"]

    def behaviors(self) -> set:
        return {c.graph.behavior() for c in self.terminated}


def graph_key(g: ExecutionGraph) -> tuple:
    return (
        tuple((e.key, str(e.label)) for e in g.events),
        tuple(sorted(g.rf)),
        tuple(sorted(g.mo)),
    )


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Node:
    labels: tuple[tuple[Label, ...], ...]
    rf: frozenset[tuple[Event, Event]]  # (read, write)
    mo: tuple[tuple[str, tuple[Event, ...]], ...]
    runs: tuple[ThreadRun, ...] = field(compare=False, hash=False, default=())

    @property
    def key(self) -> tuple:
        return (self.labels, self.rf, self.mo)

    def graph(self) -> ExecutionGraph:
        evs = [e for _, ws in self.mo for e in ws if e.is_init]
        for i, ls in enumerate(self.labels):
            evs.extend(Event(i + 1, sn, lab) for sn, lab in enumerate(ls))
        return ExecutionGraph.build(evs, dict(self.rf), dict(self.mo))


class _Explorer:
    def __init__(self, p: ConcurrentProgram, m: ModelId, b: ExplorationBounds, keep_partial: bool = False):
        self.p = p
        self.m = m
        self.b = b
        self.loops = detect_spinloops(p)
        self.keep_partial = keep_partial
        self.seen: set = set()
        self.complete: dict[tuple, CompleteGraph] = {}
        self.partial: dict[tuple, ExecutionGraph] = {}
        self.stats = EnumerationStats()

    def root(self) -> _Node:
        runs = tuple(initial_run(t, self.loops[t.tid]) for t in self.p.threads)
        mo = tuple((x, (init_event(x),)) for x in sorted(self.p.locations))
        return _Node(tuple(() for _ in self.p.threads), frozenset(), mo, runs)

    def children(self, node: _Node) -> Iterator[_Node]:
        mo = dict(node.mo)
        for i, tp in enumerate(self.p.threads):
            run = node.runs[i]
            acc = tp.next_access(run.state)
            if acc is None:
                continue
            loops = self.loops[tp.tid]
            if run.nevents >= self.b.max_events_per_thread:
                if in_spinloop(loops, run):
                    self.stats.truncated += 1
                    continue
                raise MemfairError(
                    E_BOUND_EXCEEDED,
                    f"thread {tp.tid} needs more than {self.b.max_events_per_thread} events outside spinloops",
                )
            sn = run.nevents
            ws = mo[acc.loc]
            if acc.kind == "write":
                lab = Label("W", acc.loc, None, acc.value)
                e = Event(tp.tid, sn, lab)
                for pos in range(1, len(ws) + 1):
                    yield self._extend(node, i, lab, e, None, ws[:pos] + (e,) + ws[pos:])
            else:
                for k, w in enumerate(ws):
                    lab = tp.label_for_read(run.state, w.label.val_w)
                    e = Event(tp.tid, sn, lab)
                    new_ws = ws[: k + 1] + (e,) + ws[k + 1:] if lab.kind == RMW else None
                    yield self._extend(node, i, lab, e, w, new_ws)

    def _extend(self, node: _Node, i: int, lab: Label, e: Event, src: Event | None, new_ws) -> _Node | None:
        tp = self.p.threads[i]
        labels = node.labels[i] + (lab,)
        run = advance_run(tp, self.loops[tp.tid], node.runs[i], lab, labels)
        cap = self.b.spinloop_cap
        if run.bad_iter and not node.runs[i].bad_iter:
            self.stats.bad_iterations += 1
        if cap is not None and run.done > cap:
            self.stats.pruned += 1
            return None
        rf = node.rf | {(e, src)} if src is not None else node.rf
        mo = node.mo
        if new_ws is not None:
            mo = tuple((x, new_ws if x == lab.loc else ws) for x, ws in mo)
        return _Node(
            node.labels[:i] + (labels,) + node.labels[i + 1:],
            rf,
            mo,
            node.runs[:i] + (run,) + node.runs[i + 1:],
        )

    def record(self, node: _Node, g: ExecutionGraph) -> None:
        if self.keep_partial:
            self.partial[graph_key(g)] = g
        cap = self.b.spinloop_cap
        stuck = []
        for tp, run in zip(self.p.threads, node.runs):
            if tp.is_terminated(run.state):
                continue
            if at_cap(run, cap):
                stuck.append(tp.tid)
            else:
                return
        regs = {}
        for tp, run in zip(self.p.threads, node.runs):
            for r, v in tp.registers_of(run.state).items():
                if not r.startswith("$"):
                    regs[f"{tp.tid}:{r}"] = v
        iters = tuple((tp.tid, run.last_iter) for tp, run in zip(self.p.threads, node.runs) if run.last_iter)
        self.complete[graph_key(g)] = CompleteGraph(
            g,
            "stuck" if stuck else "terminated",
            tuple(stuck),
            tuple(sorted(regs.items())),
            iters,
        )

    def run(self, start: Iterable[_Node]) -> None:
        stack = list(start)
        while stack:
            node = stack.pop()
            if node is None:
                continue
            if node.key in self.seen:
                continue
            self.seen.add(node.key)
            g = node.graph()
            if not consistent(g, self.m):
                self.stats.pruned += 1
                continue
            self.stats.explored += 1
            self.record(node, g)
            stack.extend(self.children(node))

    def result(self) -> EnumerationResult:
        graphs = [self.complete[k] for k in sorted(self.complete)]
        partial = [self.partial[k] for k in sorted(self.partial)] if self.keep_partial else None
        return EnumerationResult(graphs, self.stats, partial)


def _worker(args) -> tuple[dict, dict, EnumerationStats]:
    p, m, b, keep_partial, start = args
    ex = _Explorer(p, m, b, keep_partial)
    ex.run(start)
    return ex.complete, ex.partial, ex.stats


def worker_count() -> int:
    try:
        cap = int(os.environ.get("MEMFAIR_THREADS", "1"))
    except ValueError:
        cap = 1
    return max(1, min(cap, os.cpu_count() or 1))


def enumerate_consistent_graphs(
    p: ConcurrentProgram,
    m: ModelId | str,
    b: ExplorationBounds | None = None,
    *,
    keep_partial: bool = False,
    workers: int | None = None,
) -> EnumerationResult:
    """All complete consistent graphs of ``p`` under ``m`` within bounds.

    A graph is complete when every thread has terminated or sits at a spinloop
    head after ``spinloop_cap`` completed iterations.  ``MEMFAIR_THREADS``
    caps how many worker processes the top-level subtrees are spread over.
    """
    m = ModelId.parse(m)
    b = b or ExplorationBounds()
    workers = worker_count() if workers is None else workers
    ex = _Explorer(p, m, b, keep_partial)
    root = ex.root()
    if workers <= 1:
        ex.run([root])
        return ex.result()
    # expand a couple of levels locally, then fan out the frontier
    frontier = [root]
    for _ in range(2):
        nxt = []
        for node in frontier:
            if node is None or node.key in ex.seen:
                continue
            ex.seen.add(node.key)
            g = node.graph()
            if not consistent(g, m):
                ex.stats.pruned += 1
                continue
            ex.stats.explored += 1
            ex.record(node, g)
            nxt.extend(c for c in ex.children(node) if c is not None)
        frontier = nxt
    chunks = [frontier[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for complete, partial, stats in pool.map(_worker, [(p, m, b, keep_partial, c) for c in chunks if c]):
            ex.complete.update(complete)
            ex.partial.update(partial)
            ex.stats.explored += stats.explored
            ex.stats.pruned += stats.pruned
            ex.stats.truncated += stats.truncated
            ex.stats.bad_iterations += stats.bad_iterations
    return ex.result()


@dataclass(frozen=True)
class OutcomeVerdict:
    allowed: bool
    witness: ExecutionGraph | None = None
    registers: tuple[tuple[str, int], ...] = ()
    graphs_checked: int = 0


def check_outcome(
    p: ConcurrentProgram,
    m: ModelId | str,
    assertion: str | Expr,
    b: ExplorationBounds | None = None,
) -> OutcomeVerdict:
    """Is some terminated consistent graph's final register file a model of ``assertion``?"""
    e = parse_assertion(assertion) if isinstance(assertion, str) else assertion
    res = enumerate_consistent_graphs(p, m, b)
    term = res.terminated
    for c in term:
        if eval_assertion(e, c.registers):
            return OutcomeVerdict(True, c.graph, c.final_regs, len(term))
    return OutcomeVerdict(False, None, (), len(term))


def outcomes(p: ConcurrentProgram, m: ModelId | str, b: ExplorationBounds | None = None) -> set[tuple[tuple[str, int], ...]]:
    return {c.final_regs for c in enumerate_consistent_graphs(p, m, b).terminated}
