"""Operational memory machines for SC, TSO, RA and StrongCOH, linked to programs.

Machine states are immutable values and ``machine_step`` is a pure function.

The RA machine keeps messages of each location in timestamp order rather than
storing numeric timestamps: a message's timestamp is its position in that
order.  A plain write may be placed in any gap above the writer's view, and
gaps are assumed wide enough for any later insertion, except that an RMW
message is glued to the message it read (timestamps t and t+1), so nothing can
be inserted between them.  Only the relative order of timestamps is
observable, which keeps the state space finite.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .consistency import ModelId
from .enumeration import ExplorationBounds, advance_run, at_cap, in_spinloop, initial_run
from .errors import E_BOUND_EXCEEDED, E_NOT_ENABLED, MemfairError
from .graphs import READ, RMW, WRITE, Behavior, Event, Label, init_event
from .program import Cas, ConcurrentProgram, ProgramState, detect_spinloops

# ---------------------------------------------------------------------------
# machine states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SCState:
    locs: tuple[str, ...]
    memory: tuple[int, ...]

    def read(self, x: str) -> int:
        return self.memory[self.locs.index(x)]

    def to_json(self) -> dict:
        return {"memory": dict(zip(self.locs, self.memory))}


@dataclass(frozen=True)
class TSOState:
    locs: tuple[str, ...]
    memory: tuple[int, ...]
    buffers: tuple[tuple[tuple[str, int], ...], ...]  # per thread, oldest first

    def read(self, tid: int, x: str) -> int:
        for y, v in reversed(self.buffers[tid - 1]):
            if y == x:
                return v
        return self.memory[self.locs.index(x)]

    def to_json(self) -> dict:
        return {
            "memory": dict(zip(self.locs, self.memory)),
            "buffers": {str(t + 1): [[x, v] for x, v in b] for t, b in enumerate(self.buffers)},
        }


View = tuple[Event, ...]  # per location (in ``locs`` order), the message viewed


@dataclass(frozen=True)
class Msg:
    ev: Event  # the writing event doubles as the message identity
    view: View
    glued: bool = False  # timestamp is exactly one above its predecessor's

    @property
    def val(self) -> int:
        return self.ev.label.val_w


@dataclass(frozen=True)
class RAState:
    locs: tuple[str, ...]
    messages: tuple[tuple[Msg, ...], ...]  # per location, in timestamp order
    views: tuple[View, ...]  # per thread
    counts: tuple[int, ...]  # observable steps taken per thread

    def li(self, x: str) -> int:
        return self.locs.index(x)

    def ts(self, ev: Event) -> int:
        msgs = self.messages[self.li(ev.loc)]
        for k, m in enumerate(msgs):
            if m.ev == ev:
                return k
        raise MemfairError(E_NOT_ENABLED, f"no message {ev}")

    def msg(self, ev: Event) -> Msg:
        return self.messages[self.li(ev.loc)][self.ts(ev)]

    def view_ts(self, tid: int, x: str) -> int:
        return self.ts(self.views[tid - 1][self.li(x)])

    def join(self, a: View, b: View) -> View:
        return tuple(u if self.ts(u) >= self.ts(v) else v for u, v in zip(a, b))

    def to_json(self) -> dict:
        def vj(v: View) -> dict:
            return {x: self.ts(e) for x, e in zip(self.locs, v)}

        return {
            "messages": [
                {"loc": x, "val": m.val, "ts": k, "view": vj(m.view), "writer": event_json(m.ev)}
                for x, msgs in zip(self.locs, self.messages)
                for k, m in enumerate(msgs)
            ],
            "threadViews": {str(t + 1): vj(v) for t, v in enumerate(self.views)},
        }


MachineState = SCState | TSOState | RAState


def initial_machine_state(m: ModelId | str, locations: Iterable[str], nthreads: int) -> MachineState:
    m = ModelId.parse(m)
    locs = tuple(sorted(set(locations)))
    if m is ModelId.SC:
        return SCState(locs, (0,) * len(locs))
    if m is ModelId.TSO:
        return TSOState(locs, (0,) * len(locs), ((),) * nthreads)
    v0 = tuple(init_event(x) for x in locs)
    return RAState(locs, tuple((Msg(e, v0),) for e in v0), (v0,) * nthreads, (0,) * nthreads)


# ---------------------------------------------------------------------------
# transition labels
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Obs:
    tid: int
    label: Label


@dataclass(frozen=True, order=True)
class Prop:
    """TSO: propagate the oldest buffered write of ``tid``."""

    tid: int


@dataclass(frozen=True)
class PropMsg:
    """RA/StrongCOH: raise ``tid``'s view of ``msg.loc`` to ``msg``."""

    tid: int
    msg: Event


TransitionLabel = Obs | Prop | PropMsg


def event_json(e: Event) -> dict:
    return {"tid": e.tid, "sn": e.sn, **e.label.to_json()}


def event_from_json(d: dict) -> Event:
    return Event(d["tid"], d["sn"], Label.from_json(d))


def label_json(t: TransitionLabel) -> dict:
    if isinstance(t, Obs):
        return {"kind": "obs", "tid": t.tid, "label": t.label.to_json()}
    if isinstance(t, Prop):
        return {"kind": "prop", "tid": t.tid}
    return {"kind": "prop", "tid": t.tid, "msg": event_json(t.msg)}


def label_from_json(d: dict) -> TransitionLabel:
    if d["kind"] == "obs":
        return Obs(d["tid"], Label.from_json(d["label"]))
    if "msg" in d:
        return PropMsg(d["tid"], event_from_json(d["msg"]))
    return Prop(d["tid"])


# ---------------------------------------------------------------------------
# steps
# ---------------------------------------------------------------------------


def _not_enabled(t: TransitionLabel, why: str) -> MemfairError:
    return MemfairError(E_NOT_ENABLED, f"{t} not enabled: {why}")


def _set(tup: tuple, i: int, v) -> tuple:
    return tup[:i] + (v,) + tup[i + 1:]


def _sc_step(s: SCState, t: TransitionLabel) -> SCState:
    if not isinstance(t, Obs):
        raise _not_enabled(t, "SC has no silent transitions")
    lab = t.label
    i = s.locs.index(lab.loc)
    if lab.kind != WRITE and s.memory[i] != lab.val_r:
        raise _not_enabled(t, f"memory holds {s.memory[i]}")
    if lab.kind == READ:
        return s
    return SCState(s.locs, _set(s.memory, i, lab.val_w))


def _tso_step(s: TSOState, t: TransitionLabel) -> TSOState:
    if isinstance(t, Prop):
        buf = s.buffers[t.tid - 1]
        if not buf:
            raise _not_enabled(t, "empty buffer")
        (x, v), rest = buf[0], buf[1:]
        return TSOState(s.locs, _set(s.memory, s.locs.index(x), v), _set(s.buffers, t.tid - 1, rest))
    if not isinstance(t, Obs):
        raise _not_enabled(t, "not a TSO label")
    lab, k = t.label, t.tid - 1
    if lab.kind == WRITE:
        return TSOState(s.locs, s.memory, _set(s.buffers, k, s.buffers[k] + ((lab.loc, lab.val_w),)))
    if lab.kind == READ:
        if s.read(t.tid, lab.loc) != lab.val_r:
            raise _not_enabled(t, f"thread sees {s.read(t.tid, lab.loc)}")
        return s
    if s.buffers[k]:
        raise _not_enabled(t, "RMW needs an empty buffer")
    i = s.locs.index(lab.loc)
    if s.memory[i] != lab.val_r:
        raise _not_enabled(t, f"memory holds {s.memory[i]}")
    return TSOState(s.locs, _set(s.memory, i, lab.val_w), s.buffers)


def ra_readable(s: RAState, tid: int, x: str) -> list[Msg]:
    msgs = s.messages[s.li(x)]
    return list(msgs[s.view_ts(tid, x):])


def ra_write_slots(s: RAState, tid: int, x: str) -> list[Event]:
    """Messages a new plain write by ``tid`` may be placed directly after."""
    msgs = s.messages[s.li(x)]
    lo = s.view_ts(tid, x)
    return [msgs[k].ev for k in range(lo, len(msgs)) if k + 1 == len(msgs) or not msgs[k + 1].glued]


def ra_rmw_ok(s: RAState, src: Event) -> bool:
    msgs = s.messages[s.li(src.loc)]
    k = s.ts(src)
    return k + 1 == len(msgs) or not msgs[k + 1].glued


def _ra_default_read(s: RAState, tid: int, lab: Label) -> Event:
    cands = [m.ev for m in ra_readable(s, tid, lab.loc) if m.val == lab.val_r]
    if lab.kind == RMW:
        cands = [e for e in cands if ra_rmw_ok(s, e)]
    if not cands:
        raise _not_enabled(Obs(tid, lab), "no readable message with that value")
    return cands[-1]


def _ra_step(s: RAState, t: TransitionLabel, choice: Event | None, strong: bool) -> RAState:
    if isinstance(t, PropMsg):
        x = t.msg.loc
        if s.view_ts(t.tid, x) >= s.ts(t.msg):
            raise _not_enabled(t, "message not above the thread view")
        view = _set(s.views[t.tid - 1], s.li(x), t.msg)
        return RAState(s.locs, s.messages, _set(s.views, t.tid - 1, view), s.counts)
    if not isinstance(t, Obs):
        raise _not_enabled(t, "not an RA label")
    lab, k = t.label, t.tid - 1
    xi = s.li(lab.loc)
    view = s.views[k]
    ev = Event(t.tid, s.counts[k], lab)
    counts = _set(s.counts, k, s.counts[k] + 1)
    if lab.kind in (READ, RMW):
        src = choice if choice is not None else _ra_default_read(s, t.tid, lab)
        if src.loc != lab.loc or s.msg(src).val != lab.val_r:
            raise _not_enabled(t, f"message {src} has the wrong location or value")
        if s.ts(src) < s.view_ts(t.tid, lab.loc):
            raise _not_enabled(t, f"message {src} is below the thread view")
        if strong:
            view = _set(view, xi, src)
        else:
            view = s.join(_set(view, xi, src), s.msg(src).view)
        if lab.kind == READ:
            return RAState(s.locs, s.messages, _set(s.views, k, view), counts)
        if not ra_rmw_ok(s, src):
            raise _not_enabled(t, f"timestamp after {src} is taken")
        pred, glued = src, True
    else:
        pred = choice if choice is not None else s.messages[xi][-1].ev
        if pred.loc != lab.loc or pred not in ra_write_slots(s, t.tid, lab.loc):
            raise _not_enabled(t, f"no free timestamp after {pred}")
        glued = False
    view = _set(view, xi, ev)
    msgs = s.messages[xi]
    pos = s.ts(pred) + 1
    msgs = msgs[:pos] + (Msg(ev, view, glued),) + msgs[pos:]
    return RAState(s.locs, _set(s.messages, xi, msgs), _set(s.views, k, view), counts)


def machine_step(m: ModelId | str, s: MachineState, t: TransitionLabel, choice: Event | None = None) -> MachineState:
    """Successor of ``s`` under ``t``.

    ``choice`` resolves RA nondeterminism: the message read (R/RMW) or the
    message a new plain write is placed directly after.  When omitted, reads
    take the newest readable message with the right value and writes take
    the maximal timestamp.
    """
    m = ModelId.parse(m)
    if m is ModelId.SC:
        return _sc_step(s, t)
    if m is ModelId.TSO:
        return _tso_step(s, t)
    return _ra_step(s, t, choice, strong=m is ModelId.StrongCOH)


def silent_moves(m: ModelId, s: MachineState) -> list[tuple[TransitionLabel, None]]:
    if isinstance(s, TSOState):
        return [(Prop(k + 1), None) for k, b in enumerate(s.buffers) if b]
    if isinstance(s, RAState):
        out = []
        for k, view in enumerate(s.views):
            for xi, msgs in enumerate(s.messages):
                lo = s.ts(view[xi])
                out.extend((PropMsg(k + 1, msg.ev), None) for msg in msgs[lo + 1:])
        return out
    return []


def _thread_moves(
    m: ModelId, s: MachineState, p: ConcurrentProgram, ps: ProgramState, tid: int, locked_cas: bool
) -> list[tuple[TransitionLabel, Event | None]]:
    tp = p.thread(tid)
    st = ps[tid - 1]
    acc = tp.next_access(st)
    if acc is None:
        return []
    x = acc.loc
    if acc.kind == "write":
        lab = Label(WRITE, x, None, acc.value)
        if isinstance(s, RAState):
            return [(Obs(tid, lab), e) for e in ra_write_slots(s, tid, x)]
        return [(Obs(tid, lab), None)]
    if isinstance(s, SCState):
        return [(Obs(tid, tp.label_for_read(st, s.read(x))), None)]
    if isinstance(s, TSOState):
        lab = tp.label_for_read(st, s.read(tid, x))
        locked = lab.kind == RMW or (locked_cas and isinstance(tp.instrs[st.pc], Cas))
        if locked and s.buffers[tid - 1]:
            return []
        return [(Obs(tid, lab), None)]
    out = []
    for msg in ra_readable(s, tid, x):
        lab = tp.label_for_read(st, msg.val)
        if lab.kind == RMW and not ra_rmw_ok(s, msg.ev):
            continue
        out.append((Obs(tid, lab), msg.ev))
    return out


def moves(
    m: ModelId | str, s: MachineState, p: ConcurrentProgram, ps: ProgramState, locked_cas: bool = True
) -> list[tuple[TransitionLabel, Event | None]]:
    """Enabled transitions of the linked system, each with its RA choice.

    With ``locked_cas`` a CAS under TSO needs an empty buffer even when it
    fails and only reads.
    """
    m = ModelId.parse(m)
    out = []
    for tid in p.tids:
        out.extend(_thread_moves(m, s, p, ps, tid, locked_cas))
    return out + silent_moves(m, s)


def enabled_transitions(
    m: ModelId | str, s: MachineState, p: ConcurrentProgram, ps: ProgramState, locked_cas: bool = True
) -> set[TransitionLabel]:
    return {t for t, _ in moves(m, s, p, ps, locked_cas)}


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceStep:
    label: TransitionLabel
    choice: Event | None = None

    def to_json(self) -> dict:
        d = label_json(self.label)
        if self.choice is not None:
            d["choice"] = event_json(self.choice)
        return d

    @staticmethod
    def from_json(d: dict) -> "TraceStep":
        return TraceStep(label_from_json(d), event_from_json(d["choice"]) if "choice" in d else None)


@dataclass(frozen=True)
class Trace:
    model: ModelId
    locations: tuple[str, ...]
    nthreads: int
    steps: tuple[TraceStep, ...] = ()

    def __len__(self) -> int:
        return len(self.steps)

    def initial_state(self) -> MachineState:
        return initial_machine_state(self.model, self.locations, self.nthreads)

    def to_json(self) -> list[dict]:
        return [s.to_json() for s in self.steps]

    @staticmethod
    def from_json(m: ModelId | str, locations: Iterable[str], nthreads: int, d: Sequence[dict]) -> "Trace":
        return Trace(ModelId.parse(m), tuple(sorted(set(locations))), nthreads, tuple(TraceStep.from_json(x) for x in d))


@dataclass(frozen=True)
class AnnotatedTrace:
    trace: Trace
    states: tuple[MachineState, ...]  # states[i] is the state after step i

    @property
    def steps(self) -> tuple[TraceStep, ...]:
        return self.trace.steps

    @property
    def model(self) -> ModelId:
        return self.trace.model

    def state_before(self, i: int) -> MachineState:
        return self.states[i - 1] if i > 0 else self.trace.initial_state()


def annotate(t: Trace) -> AnnotatedTrace:
    """Replay ``t`` on its machine; raises E_NOT_ENABLED on a bad step."""
    s = t.initial_state()
    states = []
    for st in t.steps:
        s = machine_step(t.model, s, st.label, st.choice)
        states.append(s)
    return AnnotatedTrace(t, tuple(states))


def behavior_of_trace(t: Trace | AnnotatedTrace | Sequence[TransitionLabel | TraceStep]) -> Behavior:
    steps = t.steps if isinstance(t, (Trace, AnnotatedTrace)) else t
    per: dict[int, list[Label]] = {}
    for st in steps:
        lab = st.label if isinstance(st, TraceStep) else st
        if isinstance(lab, Obs):
            per.setdefault(lab.tid, []).append(lab.label)
    return Behavior.of(per)


# ---------------------------------------------------------------------------
# fair scheduling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FairSchedulerConfig:
    max_steps: int = 1000
    delay_bound: int | None = None  # None: 4 per thread
    seed: int = 0
    never_propagate: bool = False  # unfair override: silent transitions are never taken
    locked_cas: bool = True

    def __post_init__(self):
        if self.delay_bound is not None and self.delay_bound < 1:
            raise ValueError("delay bound must be at least 1")


@dataclass(frozen=True)
class FairRun:
    trace: Trace
    program_state: ProgramState
    terminated: bool
    final_registers: dict = field(default_factory=dict)


def _move_class(t: TransitionLabel) -> tuple:
    if isinstance(t, Obs):
        return ("t", t.tid)
    if isinstance(t, Prop):
        return ("p", t.tid)
    return ("p", t.tid, t.msg.key)


def fair_run(p: ConcurrentProgram, m: ModelId | str, cfg: FairSchedulerConfig = FairSchedulerConfig()) -> FairRun:
    """Random run with bounded-delay fairness.

    Transitions are grouped into classes: one per thread and one per silent
    label.  A class that stays enabled for ``delay_bound`` consecutive steps
    without being taken is scheduled next.  After the program terminates the
    run keeps taking silent transitions until none is enabled.
    """
    m = ModelId.parse(m)
    rng = random.Random(cfg.seed)
    d = cfg.delay_bound if cfg.delay_bound is not None else 4 * len(p.threads)
    s = initial_machine_state(m, p.locations, len(p.threads))
    ps = p.initial_state()
    steps: list[TraceStep] = []
    waiting: dict[tuple, int] = {}
    while len(steps) < cfg.max_steps:
        avail = moves(m, s, p, ps, cfg.locked_cas)
        if cfg.never_propagate:
            avail = [mv for mv in avail if isinstance(mv[0], Obs)]
        if not avail:
            break
        classes: dict[tuple, list] = {}
        for mv in avail:
            classes.setdefault(_move_class(mv[0]), []).append(mv)
        overdue = [c for c in classes if waiting.get(c, 0) >= d]
        if overdue:
            c = max(sorted(overdue), key=lambda c: waiting[c])
        else:
            c = rng.choice(sorted(classes))
        t, choice = rng.choice(classes[c])
        if isinstance(s, RAState) and isinstance(t, Obs) and t.label.kind == WRITE:
            choice = s.messages[s.li(t.label.loc)][-1].ev  # maximal timestamp
        s = machine_step(m, s, t, choice)
        if isinstance(t, Obs):
            tp = p.thread(t.tid)
            new, _ = tp.step(ps[t.tid - 1], t.label)
            ps = ps[: t.tid - 1] + (new,) + ps[t.tid:]
        steps.append(TraceStep(t, choice))
        waiting = {k: waiting.get(k, 0) + 1 for k in classes if k != c}
    trace = Trace(m, tuple(sorted(p.locations)), len(p.threads), tuple(steps))
    return FairRun(trace, ps, p.is_terminated(ps), p.final_registers(ps))


# ---------------------------------------------------------------------------
# exhaustive exploration
# ---------------------------------------------------------------------------


@dataclass
class OperationalResult:
    behaviors: set[Behavior]
    stuck: set[Behavior]  # every thread terminated or parked at the spinloop cap
    states: int = 0
    truncated: int = 0


def explore_behaviors(
    p: ConcurrentProgram,
    m: ModelId | str,
    b: ExplorationBounds = ExplorationBounds(),
    locked_cas: bool = True,
) -> OperationalResult:
    """All terminated behaviors reachable under every interleaving and silent placement, within ``b``."""
    m = ModelId.parse(m)
    loops = detect_spinloops(p)
    runs0 = tuple(initial_run(t, loops[t.tid]) for t in p.threads)
    s0 = initial_machine_state(m, p.locations, len(p.threads))
    labels0 = tuple(() for _ in p.threads)
    res = OperationalResult(set(), set())
    seen = set()
    stack = [(labels0, runs0, s0)]
    cap = b.spinloop_cap
    while stack:
        labels, runs, s = stack.pop()
        key = (labels, s)
        if key in seen:
            continue
        seen.add(key)
        res.states += 1
        ps = tuple(r.state for r in runs)
        if p.is_terminated(ps):
            res.behaviors.add(Behavior.of(dict(zip(p.tids, labels))))
        elif all(t.is_terminated(r.state) or at_cap(r, cap) for t, r in zip(p.threads, runs)):
            res.stuck.add(Behavior.of(dict(zip(p.tids, labels))))
        for t, choice in moves(m, s, p, ps, locked_cas):
            if isinstance(t, Obs):
                i = t.tid - 1
                run = runs[i]
                tl = loops[t.tid]
                if run.nevents >= b.max_events_per_thread:
                    if in_spinloop(tl, run):
                        res.truncated += 1
                        continue
                    raise MemfairError(
                        E_BOUND_EXCEEDED, f"thread {t.tid} needs more than {b.max_events_per_thread} events"
                    )
                ls = labels[i] + (t.label,)
                new = advance_run(p.threads[i], tl, run, t.label, ls)
                if cap is not None and new.done > cap:
                    continue
                stack.append((_set(labels, i, ls), _set(runs, i, new), machine_step(m, s, t, choice)))
            else:
                stack.append((labels, runs, machine_step(m, s, t, choice)))
    return res
