"""Shared fixtures, strategies and brute-force oracles for the test suite."""

from __future__ import annotations

import itertools
from typing import Iterable, Iterator
from importlib import resources

from hypothesis import strategies as st

from memfair.consistency import ModelId, consistent
from memfair.enumeration import graph_key
from memfair.graphs import Event, ExecutionGraph, Label, check_wellformed, init_event
from memfair.enumeration import ExplorationBounds
from memfair.program import ConcurrentProgram, Load, detect_spinloops, parse_program, replay_thread, unroll_outer_loops
from memfair.termination import termination_bounds

LITMUS = ["sb", "mp", "2rmw", "sb_rmws", "hb_acyclic"]


def corpus(name: str, rounds: int | None = None) -> ConcurrentProgram:
    text = (resources.files("memfair") / "corpus" / f"{name}.lit").read_text()
    p = parse_program(text, name)
    return p if rounds is None else unroll_outer_loops(p, rounds)


def bounds_for(p: ConcurrentProgram, cap: int = 1) -> ExplorationBounds:
    """Default bounds for loop-free programs, capped spinloops otherwise."""
    if any(tl.loops for _, tl in detect_spinloops(p).threads):
        return termination_bounds(p, cap)
    return ExplorationBounds()


# ---------------------------------------------------------------------------
# random straight-line programs
# ---------------------------------------------------------------------------

LOCS = ("x", "y")


@st.composite
def instructions(draw, regs: list[str]):
    kind = draw(st.sampled_from(["load", "store", "store", "fadd", "cas", "swap"]))
    loc = draw(st.sampled_from(LOCS))
    val = draw(st.integers(1, 2))
    if kind == "store":
        if regs and draw(st.booleans()):
            return f"store({loc}, {draw(st.sampled_from(regs))} + {val});", None
        return f"store({loc}, {val});", None
    r = f"r{len(regs)}"
    if kind == "load":
        return f"{r} = load({loc});", r
    if kind == "fadd":
        return f"{r} = FADD({loc}, {val});", r
    if kind == "swap":
        return f"{r} = SWAP({loc}, {val});", r
    return f"{r} = CAS({loc}, {draw(st.integers(0, 1))}, {val});", r


@st.composite
def programs(draw, max_threads: int = 2, max_events: int = 6, min_events: int = 1):
    """Straight-line programs with at most ``max_events`` memory accesses in total."""
    nthreads = draw(st.integers(1, max_threads))
    total = draw(st.integers(max(min_events, nthreads), max_events))
    sizes = [1] * nthreads
    for _ in range(total - nthreads):
        sizes[draw(st.integers(0, nthreads - 1))] += 1
    parts = [f"locations {' '.join(LOCS)};"]
    for tid, size in enumerate(sizes, 1):
        regs: list[str] = []
        body = []
        for _ in range(size):
            text, r = draw(instructions(regs))
            body.append(text)
            if r:
                regs.append(r)
        parts.append(f"thread {tid} {{ " + " ".join(body) + " }")
    return parse_program("\n".join(parts), "random")


# ---------------------------------------------------------------------------
# naive generate-and-filter enumeration
# ---------------------------------------------------------------------------


def _thread_sequences(tp, domain) -> list[tuple[Label, ...]]:
    out = []

    def go(st_, labels):
        acc = tp.next_access(st_)
        if acc is None:
            out.append(tuple(labels))
            return
        for lab in sorted(tp.enabled(st_, domain)):
            nxt, _ = tp.step(st_, lab)
            go(nxt, labels + [lab])

    go(tp.initial()[0], [])
    return out


def naive_candidates(p: ConcurrentProgram) -> Iterator[ExecutionGraph]:
    """Every well-formed graph of a loop-free program, by brute force.

    Values come from a domain grown by whatever some run could write.  po∪rf
    is acyclic in every model, so a value depends on a chain of at most as
    many writes as the program has; that many rounds of growth suffice.
    Then every combination of per-thread label sequences, rf choice and mo
    permutation is built.
    """
    domain = set(p.value_domain())
    rounds = sum(1 for tp in p.threads for ins in tp.instrs if not isinstance(ins, Load)) + 1
    for _ in range(rounds):
        seqs = {tp.tid: _thread_sequences(tp, sorted(domain)) for tp in p.threads}
        written = {lab.val_w for ss in seqs.values() for s in ss for lab in s if lab.val_w is not None}
        if written <= domain:
            break
        domain |= written
    seqs = {tp.tid: _thread_sequences(tp, sorted(domain)) for tp in p.threads}
    for combo in itertools.product(*seqs.values()):
        vals = {(lab.loc, lab.val_w) for labels in combo for lab in labels if lab.is_write}
        if any(lab.is_read and lab.val_r != 0 and (lab.loc, lab.val_r) not in vals for labels in combo for lab in labels):
            continue
        evs = [init_event(x) for x in p.locations]
        for tid, labels in zip(seqs, combo):
            assert replay_thread(p.thread(tid), labels) is not None
            evs.extend(Event(tid, sn, lab) for sn, lab in enumerate(labels))
        reads = [e for e in evs if e.label.is_read]
        writes = {x: [e for e in evs if e.label.is_write and e.loc == x] for x in p.locations}
        rf_choices = [[w for w in writes[r.loc] if w.label.val_w == r.label.val_r] for r in reads]
        mo_choices = [
            [(ws[0],) + perm for perm in itertools.permutations(ws[1:])] for ws in writes.values()
        ]
        for rf_pick in itertools.product(*rf_choices):
            for mo_pick in itertools.product(*mo_choices):
                g = ExecutionGraph.build(evs, dict(zip(reads, rf_pick)), dict(zip(writes, mo_pick)))
                if check_wellformed(g):
                    yield g


def naive_graphs(p: ConcurrentProgram, models: Iterable[ModelId]) -> dict[ModelId, set]:
    """Keys of the consistent graphs among the brute-force candidates, per model."""
    models = list(models)
    out: dict[ModelId, set] = {m: set() for m in models}
    for g in naive_candidates(p):
        key = None
        for m in models:
            if consistent(g, m):
                key = key or graph_key(g)
                out[m].add(key)
    return out


def brute_fr(g: ExecutionGraph) -> set[tuple[int, int]]:
    out = set()
    for w, r in g.rf:
        for a, b in g.mo:
            if a == w and b != r:
                out.add((r, b))
    return out
