"""Spinloop termination under fair memory.

A fair execution graph forces every infinite spinloop to eventually run an
iteration whose reads all see mo-maximal writes.  So it suffices to enumerate
graphs in which each spinloop completes at most one iteration: if some graph
leaves threads parked after an iteration whose reads have no fr-successors
(a non-termination witness) the program may diverge, and otherwise every
spinloop terminates.  The infinite extension of a witness is justified for
models where appending reads of mo-maximal writes preserves consistency;
StrongCOH verdicts are marked as relying on that property for an extended model.
"""

from __future__ import annotations

from dataclasses import dataclass

from .consistency import ModelId, consistent
from .enumeration import (
    EnumerationResult,
    ExplorationBounds,
    advance_run,
    enumerate_consistent_graphs,
    initial_run,
)
from .errors import E_BOUND_EXCEEDED, E_UNSUPPORTED_LOOP, MemfairError
from .graphs import Event, ExecutionGraph, Label, R, mo_maximal
from .program import ConcurrentProgram, MEMORY_INSTRS, detect_spinloops, unroll_outer_loops

ALL_TERMINATE = "AllSpinloopsTerminate"
MAY_DIVERGE = "MayDiverge"
UNSUPPORTED = "Unsupported"
PROVEN_MODELS = (ModelId.SC, ModelId.TSO, ModelId.RA)


@dataclass(frozen=True)
class ThreadWitness:
    tid: int
    iteration: tuple[int, int]  # serial-number range [n, n'] of the final iteration
    fr_empty: bool


@dataclass(frozen=True)
class WitnessCheck:
    is_witness: bool
    threads: tuple[ThreadWitness, ...] = ()
    reason: str = ""

    def __bool__(self) -> bool:
        return self.is_witness

    @property
    def stuck_threads(self) -> tuple[int, ...]:
        return tuple(t.tid for t in self.threads)


def _thread_labels(g: ExecutionGraph, tid: int) -> list[Label]:
    return [e.label for e in sorted((e for e in g.events if e.tid == tid), key=lambda e: e.sn)]


def is_nontermination_witness(g: ExecutionGraph, p: ConcurrentProgram) -> WitnessCheck:
    """Check the witness conditions on a finite graph of ``p``.

    Each non-terminated thread must sit right after a completed spinloop
    iteration (reads only, back at the iteration's starting state) and the
    events of that iteration must have no fr-successors.
    """
    info = detect_spinloops(p)
    stuck: list[ThreadWitness] = []
    fr = g.fr
    for tp in p.threads:
        loops = info[tp.tid]
        labels = _thread_labels(g, tp.tid)
        run = initial_run(tp, loops)
        for k in range(len(labels)):
            run = advance_run(tp, loops, run, labels[k], tuple(labels[: k + 1]))
        if tp.is_terminated(run.state):
            continue
        if run.loop is None:
            raise MemfairError(E_UNSUPPORTED_LOOP, f"thread {tp.tid} is not terminated and not in a spinloop")
        if run.last_iter is None or run.last_iter[1] != len(labels) - 1 or run.bad_iter:
            return WitnessCheck(False, tuple(stuck), f"thread {tp.tid} does not end in a completed spinloop iteration")
        n0, n1 = run.last_iter
        mask = sum(1 << g.index[e] for e in g.events if e.tid == tp.tid and n0 <= e.sn <= n1)
        fr_empty = not any(fr.rows[i] for i in range(g.n) if mask >> i & 1)
        stuck.append(ThreadWitness(tp.tid, (n0, n1), fr_empty))
    if not stuck:
        return WitnessCheck(False, (), "every thread terminated")
    bad = [t.tid for t in stuck if not t.fr_empty]
    if bad:
        return WitnessCheck(False, tuple(stuck), f"final iterations of threads {bad} read non-maximal writes")
    return WitnessCheck(True, tuple(stuck))


@dataclass(frozen=True)
class TerminationVerdict:
    outcome: str
    witness: ExecutionGraph | None = None
    stuck_threads: tuple[int, ...] = ()
    reason: str = ""
    extended_model: bool = False
    witnesses: tuple[ExecutionGraph, ...] = ()
    graphs_examined: int = 0
    max_writes_per_location: int = 0  # the verdict assumes finitely many writes per location

    def to_json(self) -> dict:
        d: dict = {"outcome": self.outcome}
        if self.witness is not None:
            d["witness"] = self.witness.to_json()
            d["stuckThreads"] = list(self.stuck_threads)
        if self.reason:
            d["reason"] = self.reason
        if self.extended_model:
            d["extendedModel"] = True
        d["graphsExamined"] = self.graphs_examined
        d["maxWritesPerLocation"] = self.max_writes_per_location
        return d


def _event_budget(p: ConcurrentProgram, cap: int) -> int:
    # acyclic outside spinloops: each memory instruction runs at most once per
    # spinloop pass, and a loop is passed at most cap + 1 times plus an exit
    return max(len([i for i in t.instrs if isinstance(i, MEMORY_INSTRS)]) for t in p.threads) * (cap + 2) + 1


def termination_bounds(p: ConcurrentProgram, cap: int = 1) -> ExplorationBounds:
    """Bounds under which every thread either terminates or parks after ``cap`` spinloop iterations."""
    return ExplorationBounds(max_events_per_thread=_event_budget(p, cap), spinloop_cap=cap)


def analyze_termination(
    p: ConcurrentProgram, m: ModelId | str, b: ExplorationBounds | None = None
) -> TerminationVerdict:
    m = ModelId.parse(m)
    extended = m not in PROVEN_MODELS
    info = detect_spinloops(p)
    if info.irreducible:
        return TerminationVerdict(UNSUPPORTED, reason=f"{E_UNSUPPORTED_LOOP}: irreducible control flow")
    if not info.acyclic_outside_spinloops:
        where = [
            f"thread {tid} loop at pc {l.header}"
            for tid, tl in info.threads
            for l in tl.loops
            if not l.is_spinloop
        ]
        return TerminationVerdict(UNSUPPORTED, reason="loop with side effects: " + ", ".join(where))
    budget = _event_budget(p, 1)
    if b is not None:
        budget = max(budget, b.max_events_per_thread)
    bounds = ExplorationBounds(max_events_per_thread=budget, spinloop_cap=1)
    try:
        res = enumerate_consistent_graphs(p, m, bounds)
    except MemfairError as err:
        if err.code == E_BOUND_EXCEEDED:
            return TerminationVerdict(UNSUPPORTED, reason=err.message)
        raise
    if res.stats.bad_iterations:
        return TerminationVerdict(
            UNSUPPORTED, reason="a loop iteration performs a write or does not return to its starting state"
        )
    max_writes = 0
    for c in res.graphs:
        for x in c.graph.locations:
            max_writes = max(max_writes, len(c.graph.writes_to(x)))
    found = []
    for k, c in enumerate(res.graphs):
        if c.status != "stuck":
            continue
        chk = is_nontermination_witness(c.graph, p)
        if chk:
            found.append((chk.stuck_threads, c.graph.n, k, c.graph))
    if found:
        # prefer witnesses stuck in lower-numbered threads, then smaller graphs
        found.sort(key=lambda t: t[:3])
        witnesses = [t[3] for t in found]
        return TerminationVerdict(
            MAY_DIVERGE, witnesses[0], found[0][0], extended_model=extended, witnesses=tuple(witnesses),
            graphs_examined=len(res.graphs), max_writes_per_location=max_writes,
        )
    return TerminationVerdict(
        ALL_TERMINATE, extended_model=extended, graphs_examined=len(res.graphs), max_writes_per_location=max_writes
    )


def check_lock_progress(p: ConcurrentProgram, m: ModelId | str, rounds: int = 1) -> TerminationVerdict:
    """Bounded-round surrogate of lock progress: unroll each thread's round loop, then decide termination."""
    return analyze_termination(unroll_outer_loops(p, rounds), m)


# ---------------------------------------------------------------------------
# property helpers
# ---------------------------------------------------------------------------


def append_maximal_reads(g: ExecutionGraph, additions: list[tuple[int, str]]) -> ExecutionGraph:
    """Append, per ``(tid, loc)``, a read of the mo-maximal write of ``loc`` at the end of thread ``tid``."""
    evs = list(g.events)
    rf = {g.events[r]: g.events[w] for w, r in g.rf}
    next_sn = {}
    for e in g.events:
        if not e.is_init:
            next_sn[e.tid] = max(next_sn.get(e.tid, 0), e.sn + 1)
    for tid, loc in additions:
        w = mo_maximal(g, loc)
        e = Event(tid, next_sn.get(tid, 0), R(loc, w.label.val_w))
        next_sn[tid] = e.sn + 1
        evs.append(e)
        rf[e] = w
    mo = {x: [g.events[i] for i in g.writes_to(x)] for x in g.locations}
    return ExecutionGraph.build(evs, rf, mo)


def read_extension_preserves(g: ExecutionGraph, m: ModelId, additions: list[tuple[int, str]]) -> bool:
    """Finite surrogate of infinite read-extensibility on one graph."""
    return not consistent(g, m) or consistent(append_maximal_reads(g, additions), m)


def reduction_coherent(p: ConcurrentProgram, res: EnumerationResult) -> bool:
    """Every completed iteration whose reads see only mo-maximal writes is followed by a loop exit.

    Checked on the complete graphs of a capped enumeration: a thread parked at
    the cap after such an iteration would contradict an ``AllSpinloopsTerminate``
    verdict.
    """
    for c in res.graphs:
        if c.status == "stuck" and is_nontermination_witness(c.graph, p):
            return False
    return True
